//! Acceptance checks live in `tests/acceptance.rs`; run with `cargo test -p taylor-pn-acceptance`.
