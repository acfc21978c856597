mod common;

use common::{random_point, rel_close, rng, Poly};
use probtaylor::gp::{condition, condition_generic, DerivativeData, PriorMean};
use probtaylor::kernels::KernelSpec;
use probtaylor::multiindex::enumerate_upto;
use proptest::prelude::*;
use rand::Rng;

fn spec(szego: bool, dim: usize) -> KernelSpec<f64> {
    if szego {
        KernelSpec::szego(1.7, 0.9, dim).unwrap()
    } else {
        KernelSpec::exponential(1.7, 0.9, dim).unwrap()
    }
}

fn data_from(poly: &Poly, a: &[f64], order: usize) -> DerivativeData<f64> {
    DerivativeData::from_fn(a.to_vec(), order, |alpha| poly.derivative_at(alpha, a)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn posterior_mean_replicates_polynomials(szego in any::<bool>(), dim in 1usize..4, order in 0usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let poly = Poly::random(&mut r, dim, order);
        let a = random_point(&mut r, dim, 0.1);
        let post = condition(&spec(szego, dim), &PriorMean::zero(), &data_from(&poly, &a, order)).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = a.iter().map(|ai| ai + r.random_range(-0.5..0.5) / dim as f64).collect();
            prop_assert!(rel_close(post.mean(&x).unwrap(), poly.eval(&x), 1e-9));
        }
    }

    #[test]
    fn mean_is_invariant_to_low_degree_prior(dim in 1usize..3, order in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, dim, order + 2);
        let a = random_point(&mut r, dim, 0.2);
        let prior_terms = enumerate_upto(dim, order).into_iter().map(|m| (m, r.random_range(-3.0..3.0)));
        let prior = PriorMean::from_terms(prior_terms).unwrap();
        let k = spec(false, dim);
        let data = data_from(&f, &a, order);
        let with_prior = condition(&k, &prior, &data).unwrap();
        let without = condition(&k, &PriorMean::zero(), &data).unwrap();
        let x = random_point(&mut r, dim, 1.0);
        prop_assert!(rel_close(with_prior.mean(&x).unwrap(), without.mean(&x).unwrap(), 1e-10));
        prop_assert!(rel_close(with_prior.var(&x).unwrap(), without.var(&x).unwrap(), 1e-12));
    }

    #[test]
    fn tiny_noise_approaches_noiseless_posterior(dim in 1usize..3, order in 0usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, dim, order + 1);
        let a = random_point(&mut r, dim, 0.1);
        let k = spec(false, dim);
        let data = data_from(&f, &a, order);
        let exact = condition(&k, &PriorMean::zero(), &data).unwrap();
        let noisy = condition(&k, &PriorMean::zero(), &data.clone().with_uniform_noise(1e-14).unwrap()).unwrap();
        let x = random_point(&mut r, dim, 0.8);
        prop_assert!(rel_close(noisy.mean(&x).unwrap(), exact.mean(&x).unwrap(), 1e-9));
        prop_assert!((noisy.var(&x).unwrap() - exact.var(&x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_equals_matrix_form(szego in any::<bool>(), dim in 1usize..3, order in 0usize..4, noisy in any::<bool>(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, dim, order + 1);
        let a = random_point(&mut r, dim, 0.1);
        let k = spec(szego, dim);
        let mut data = data_from(&f, &a, order);
        if noisy {
            let noise = (0..data.len()).map(|_| r.random_range(0.01..0.5)).collect();
            data = data.with_noise(noise).unwrap();
        }
        let closed = condition(&k, &PriorMean::zero(), &data).unwrap();
        let generic = condition_generic(&k, &PriorMean::zero(), &data).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = a.iter().map(|ai| ai + r.random_range(-0.4..0.4) / dim as f64).collect();
            let y: Vec<f64> = a.iter().map(|ai| ai + r.random_range(-0.4..0.4) / dim as f64).collect();
            prop_assert!(rel_close(closed.mean(&x).unwrap(), generic.mean(&x).unwrap(), 1e-8));
            let (c1, c2) = (closed.cov(&x, &y).unwrap(), generic.cov(&x, &y).unwrap());
            prop_assert!((c1 - c2).abs() <= 1e-8 * (1.0 + closed.var(&x).unwrap()), "{c1} vs {c2}");
        }
    }

    #[test]
    fn variance_is_nonnegative_and_vanishes_at_centre(szego in any::<bool>(), dim in 1usize..4, order in 0usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = Poly::random(&mut r, dim, order + 1);
        let a = random_point(&mut r, dim, 0.1);
        let post = condition(&spec(szego, dim), &PriorMean::zero(), &data_from(&f, &a, order)).unwrap();
        prop_assert!(post.var(&a).unwrap().abs() < 1e-14);
        let x: Vec<f64> = a.iter().map(|ai| ai + r.random_range(-0.5..0.5) / dim as f64).collect();
        prop_assert!(post.var(&x).unwrap() >= 0.0);
    }

    #[test]
    fn monomials_obey_the_rkhs_error_bound(k in 1u32..5, n in 0usize..4, lambda in 0.3f64..2.0, sigma2 in 0.2f64..3.0) {
        prop_assume!(n < k as usize);
        let spec = KernelSpec::exponential(sigma2, lambda, 1).unwrap();
        let data = DerivativeData::from_fn(vec![0.0], n, |alpha| if alpha.order() == k as usize { 1.0 } else { 0.0 }).unwrap();
        let post = condition(&spec, &PriorMean::zero(), &data).unwrap();
        let kfact: f64 = (1..=k).map(|v| v as f64).product();
        let norm = (kfact / (sigma2 * lambda.powi(k as i32))).sqrt();
        for i in 0..200 {
            let x = -2.0 + 4.0 * i as f64 / 199.0;
            let err = (x.powi(k as i32) - post.mean(&[x]).unwrap()).abs();
            prop_assert!(err <= norm * post.var(&[x]).unwrap().sqrt() * (1.0 + 1e-12) + 1e-14);
        }
    }
}

#[test]
fn derivative_data_round_trips_through_json() {
    let data = DerivativeData::new(vec![0.5, -0.25], 1, vec![1.0, 0.1, 1.0 / 3.0])
        .unwrap()
        .with_noise(vec![0.0, 1e-3, 2e-3])
        .unwrap();
    let back = DerivativeData::from_json(&data.to_json().unwrap()).unwrap();
    assert_eq!(back, data);
}
