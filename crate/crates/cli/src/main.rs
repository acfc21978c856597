use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use taylor_pn::overrides::Overrides;
use taylor_pn::{run, CliError, Experiment, ExperimentConfig, MANIFEST_FILE};

/// Runs one experiment and writes CSV data plus a JSON manifest.
#[derive(Debug, Parser)]
#[command(name = "taylor-pn", version)]
struct Args {
    experiment: Experiment,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory [default: results/<experiment>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let overrides = match Overrides::parse(&args.set) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let config = ExperimentConfig {
        experiment: args.experiment,
        seed: args.seed,
        output_dir: args
            .out
            .unwrap_or_else(|| PathBuf::from("results").join(args.experiment.name())),
        overrides,
    };
    match run(&config) {
        Ok(outcome) => {
            // a closed stdout is not a reason to fail the run
            let mut stdout = std::io::stdout().lock();
            for line in &outcome.report.summary {
                let _ = writeln!(stdout, "{line}");
            }
            let _ = writeln!(
                stdout,
                "wrote {} files and {} to {}",
                outcome.manifest.files.len(),
                MANIFEST_FILE,
                config.output_dir.display()
            );
            match &outcome.report.failure {
                Some(e) => fail(e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
