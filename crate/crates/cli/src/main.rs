use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use tractoria::report::{self, Report};
use tractoria::{selftest, Error, Scene};

mod flat;

#[derive(Parser)]
#[command(name = "tractoria", version, about = "Conformal invariants of curves from JSON scene files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gram determinants, relative invariants, curvatures and classification
    Invariants(SceneArgs),
    /// Classification only
    Classify(SceneArgs),
    /// Conformal Frenet curvatures and frame checks
    Frenet(SceneArgs),
    /// Conformal circle residuals and flags
    Circle(SceneArgs),
    /// Null helix test
    Helix(SceneArgs),
    /// Conserved quantities along circles and null helices
    Conserved(SceneArgs),
    /// Run the built-in acceptance suite
    Selftest {
        /// Run a single criterion
        #[arg(long)]
        only: Option<usize>,
    },
}

#[derive(Args)]
struct SceneArgs {
    scene: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Override options.tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Override options.jet_order
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated sample parameters, replacing t_samples
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    samples: Option<Vec<f64>>,
    /// Process sample points concurrently
    #[arg(long)]
    parallel: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Input(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

fn load(args: &SceneArgs) -> Result<Scene, Failure> {
    let text = std::fs::read_to_string(&args.scene)
        .map_err(|e| Failure::Input(format!("{}: {}", args.scene.display(), e)))?;
    let mut scene = Scene::from_json(&text).map_err(|e| Failure::Input(format!("{}: {}", args.scene.display(), e)))?;
    if let Some(t) = args.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Input(format!("--tol must be positive, got {}", t)));
        }
        scene.tolerance = t;
    }
    if let Some(k) = args.order {
        scene.order = k;
    }
    if let Some(s) = &args.samples {
        if s.is_empty() {
            return Err(Failure::Input("--samples is empty".into()));
        }
        scene.samples = s.clone();
    }
    Ok(scene)
}

fn per_sample<T, F>(scene: &Scene, parallel: bool, f: F) -> Result<Vec<T>, Error>
where
    T: Send,
    F: Fn(&Scene, f64) -> Result<T, Error> + Sync,
{
    if parallel {
        scene.samples.par_iter().map(|&t| f(scene, t)).collect()
    } else {
        scene.samples.iter().map(|&t| f(scene, t)).collect()
    }
}

fn emit<T: Serialize>(command: &str, scene: &Scene, samples: &[T], format: Format) -> Result<(), Failure> {
    match format {
        Format::Json => println!("{}", report::to_json(&Report::new(command, scene, samples))),
        Format::Csv => print!("{}", flat::to_csv(samples).map_err(Failure::Compute)?),
    }
    Ok(())
}

fn run_scene(name: &str, args: &SceneArgs) -> Result<(), Failure> {
    let scene = load(args)?;
    let p = args.parallel;
    match name {
        "invariants" => emit(name, &scene, &per_sample(&scene, p, report::invariants_at)?, args.format),
        "classify" => emit(name, &scene, &per_sample(&scene, p, report::classify_at)?, args.format),
        "frenet" => emit(name, &scene, &per_sample(&scene, p, report::frenet_at)?, args.format),
        "circle" => emit(name, &scene, &per_sample(&scene, p, report::circle_at)?, args.format),
        "helix" => emit(name, &scene, &per_sample(&scene, p, report::helix_at)?, args.format),
        "conserved" => {
            let rep = report::conserved_report(&scene)?;
            if let Some(w) = &rep.warning {
                eprintln!("warning: {}", w);
            }
            match args.format {
                Format::Json => println!("{}", report::to_json(&Report::new(name, &scene, &rep))),
                Format::Csv => print!("{}", flat::to_csv(&rep.samples).map_err(Failure::Compute)?),
            }
            Ok(())
        }
        _ => unreachable!("subcommand names are fixed"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Invariants(a) => ("invariants", a),
        Command::Classify(a) => ("classify", a),
        Command::Frenet(a) => ("frenet", a),
        Command::Circle(a) => ("circle", a),
        Command::Helix(a) => ("helix", a),
        Command::Conserved(a) => ("conserved", a),
        Command::Selftest { only } => {
            let results = match only {
                Some(id) if (1..=selftest::TITLES.len()).contains(id) => vec![selftest::run(*id)],
                Some(id) => {
                    eprintln!("error: no criterion {}", id);
                    return ExitCode::from(2);
                }
                None => selftest::run_all(),
            };
            for c in &results {
                println!("{}", c.summary());
                for m in &c.measures {
                    println!("       {}", m);
                }
            }
            let passed = results.iter().filter(|c| c.passed()).count();
            println!("{} of {} criteria pass", passed, results.len());
            return if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run_scene(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {}", m);
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {}", m);
            ExitCode::from(1)
        }
    }
}
