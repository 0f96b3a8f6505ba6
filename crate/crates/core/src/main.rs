use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varint::bea::TimeProfile;
use varint::config::{parse_overrides, ExperimentConfig, IntegratorKind, PROBLEMS};
use varint::experiment::{bea_case, run_experiment, run_suite, ExperimentError, BEA_STEPS, SUITES};

const EXIT_NUMERICAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "varint", version, about = "Adaptive variational integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a key=value config file plus overrides.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings; later ones win.
        overrides: Vec<String>,
    },
    /// Run a named suite of experiments.
    Suite {
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// List problems, integrators and suites.
    List,
    /// Residual order study of the modified equations for a 1-DOF problem.
    Bea {
        #[arg(long, default_value = "oscillator")]
        problem: String,
        /// Amplitude c of the time profile t(a) = a + c sin a; 0 gives t = a.
        #[arg(long, default_value_t = 0.0)]
        sine: f64,
        #[arg(long, value_delimiter = ',')]
        delta_a: Option<Vec<f64>>,
    },
}

fn exit_for(e: &ExperimentError) -> ExitCode {
    match e {
        ExperimentError::Config(_) | ExperimentError::UnknownSuite(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_NUMERICAL),
    }
}

fn run(config: Option<PathBuf>, overrides: Vec<String>) -> Result<bool, ExperimentError> {
    let overrides = parse_overrides(&overrides)?;
    let cfg = match config {
        Some(path) => ExperimentConfig::from_file(&path, &overrides)?,
        None => ExperimentConfig::from_pairs(&overrides)?,
    };
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.summary.to_text());
    println!("output={}", outcome.dir.display());
    Ok(outcome.summary.ok())
}

fn suite(name: &str, out: PathBuf, workers: usize) -> Result<bool, ExperimentError> {
    let s = run_suite(name, &out, workers)?;
    for (member, r) in &s.members {
        match r {
            Ok(sum) => println!(
                "{member}: {} steps={} max_energy_error={:e}",
                if sum.ok() { "ok" } else { "failed" },
                sum.steps,
                sum.max_energy_error
            ),
            Err(e) => println!("{member}: error {e}"),
        }
    }
    for c in &s.bea {
        println!(
            "{}: slope_leading={:.3} slope_modified={:.3}",
            c.label, c.leading.slope, c.modified.slope
        );
    }
    println!("output={}", s.dir.display());
    Ok(s.all_ok())
}

fn bea(problem: &str, sine: f64, delta_a: Option<Vec<f64>>) -> Result<bool, ExperimentError> {
    let profile = if sine == 0.0 {
        TimeProfile::identity()
    } else {
        TimeProfile::Sine { c: sine }
    };
    let steps = delta_a.unwrap_or_else(|| BEA_STEPS.to_vec());
    let case = bea_case(problem, profile, &steps)?;
    print!("{}", case.to_csv());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Suite { name, out, workers } => suite(&name, out, workers),
        Command::Bea { problem, sine, delta_a } => bea(&problem, sine, delta_a),
        Command::List => {
            println!("problems: {}", PROBLEMS.join(" "));
            let names: Vec<_> = IntegratorKind::ALL.iter().map(|k| k.name()).collect();
            println!("integrators: {}", names.join(" "));
            println!("suites: {}", SUITES.join(" "));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
