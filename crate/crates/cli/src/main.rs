//! `dislab`: command-line driver for the dislocation-energy laboratory.
//!
//! Exit status is 0 on success, 1 for invalid input (unknown subcommand,
//! schema violation, unmet precondition) and 2 for numerical failures.

mod inputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dislab::annulus::{psi_delta, psi_limit, PsiLimit, DEFAULT_LADDER};
use dislab::ball::{prepare_disjoint_cover, run_construction};
use dislab::experiments::{run_experiment, ExperimentConfig, ExperimentOutput};
use dislab::fields::StrainField;
use dislab::flat::{vector_flat_surrogate_with, FlatOptions};
use dislab::io;
use dislab::relax::{PsiOracle, Relaxation};
use dislab::surgery::{dichotomy_from_surgery, run_surgery, CurlCircle, Diagnostics, DichotomyReport, StepSummary};
use dislab::{Error, Result, Vec2};
use serde::{Deserialize, Serialize};

use inputs::{BallInput, FlatInput, PhiInput, PsiInput, PsiOutput, SurgeryInput};

#[derive(Parser, Debug)]
#[command(name = "dislab", version, about = "Energies, ball constructions and sweeps for planar edge dislocations")]
struct Cli {
    /// JSON configuration of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of an experiment configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; single-shot results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-energy of one Burgers vector on an annulus or in the limit.
    Psi,
    /// Relaxed line-tension density and its lattice decomposition.
    Phi,
    /// Flat norm of an atomic measure on a polygon.
    Flat,
    /// Expanding-and-merging ball construction with an SVG snapshot.
    Ball,
    /// Strain surgery with diagnostics and the optional dichotomy check.
    Surgery,
    /// Sweeps over an eps ladder.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Summarizes a saved experiment output and re-emits its CSV.
    Report {
        /// Experiment output JSON; `--config` is used when absent.
        path: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ExperimentAction {
    Run {
        /// Experiment configuration; `--config` is used when absent.
        config: Option<PathBuf>,
        /// Also write an SVG of the configuration at every ladder point.
        #[arg(long)]
        svg: bool,
    },
}

/// Structured output of the `surgery` subcommand.
#[derive(Debug, Serialize, Deserialize)]
struct SurgeryOutput {
    balls: Vec<dislab::ball::Ball>,
    curl: Vec<CurlCircle>,
    reduced: dislab::model::DislocationMeasure,
    steps: StepSummary,
    diagnostics: Diagnostics,
    pass: bool,
    #[serde(default)]
    dichotomy: Option<DichotomyReport>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_user_error() || matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn config_path<'a>(cli: &'a Cli, positional: Option<&'a PathBuf>) -> Result<&'a Path> {
    positional
        .or(cli.config.as_ref())
        .map(PathBuf::as_path)
        .ok_or_else(|| Error::Schema { key: "--config".into(), msg: "a configuration file is required".into() })
}

fn log(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose {
        eprintln!("[dislab] {}", msg.as_ref());
    }
}

/// Writes `value` to `<out>/<name>.json`, or prints it when no output
/// directory is set.
fn emit<T: Serialize>(cli: &Cli, name: &str, value: &T) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            let path = dir.join(format!("{name}.json"));
            io::write_json(&path, value)?;
            log(cli, format!("wrote {}", path.display()));
        }
        None => print!("{}", io::to_json(value)?),
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Psi => psi(cli),
        Command::Phi => phi(cli),
        Command::Flat => flat(cli),
        Command::Ball => ball(cli),
        Command::Surgery => surgery(cli),
        Command::Experiment { action: ExperimentAction::Run { config, svg } } => experiment(cli, config.as_ref(), *svg),
        Command::Report { path } => report(cli, path.as_ref()),
    }
}

fn psi(cli: &Cli) -> Result<()> {
    let input: PsiInput = io::read_json(config_path(cli, None)?)?;
    let xi = Vec2::from(input.xi);
    let out = match input.delta {
        Some(delta) => PsiOutput {
            xi: input.xi,
            value: psi_delta(xi, delta, &input.tensor, &input.discretization)?,
            delta: Some(delta),
            fit_error: None,
        },
        None => {
            let (value, err) = psi_limit(xi, &input.tensor, &input.discretization)?;
            PsiOutput { xi: input.xi, value, delta: None, fit_error: Some(err) }
        }
    };
    emit(cli, "psi", &out)
}

fn phi(cli: &Cli) -> Result<()> {
    let input: PhiInput = io::read_json(config_path(cli, None)?)?;
    let oracle: Box<dyn PsiOracle> = match input.psi {
        Some(q) => Box::new(q),
        None => {
            log(cli, "computing the self-energy on the default ladder");
            Box::new(PsiLimit::compute(&input.tensor, &DEFAULT_LADDER, &input.discretization)?)
        }
    };
    let relax = Relaxation::new(&input.lattice, oracle.as_ref(), input.generator_radius)?;
    emit(cli, "phi", &relax.solve(Vec2::from(input.xi))?)
}

fn flat(cli: &Cli) -> Result<()> {
    let input: FlatInput = io::read_json(config_path(cli, None)?)?;
    let mut opts = FlatOptions::new(input.h);
    if let Some(s) = input.stencil {
        opts.stencil = s;
    }
    emit(cli, "flat", &vector_flat_surrogate_with(&input.mu, &input.domain, &opts)?)
}

fn ball(cli: &Cli) -> Result<()> {
    let input: BallInput = io::read_json(config_path(cli, None)?)?;
    let (start, mu) = input.start()?;
    let rule = input.stop.rule();
    if rule.max_time.is_none() && rule.sum_radii.is_none() && rule.contact.is_none() {
        return Err(Error::Schema { key: "stop".into(), msg: "give at least one of time, sum_radii, contact".into() });
    }
    let cover = prepare_disjoint_cover(&start)?;
    let trace = run_construction(&cover, input.c, &rule)?;
    log(cli, format!("stopped at t = {:.6} with {} balls", trace.stop_time, trace.final_family().len()));
    emit(cli, "ball", &trace)?;
    if let Some(dir) = &cli.out {
        let title = format!("t = {:.4}", trace.stop_time);
        let svg = io::svg_snapshot(&input.domain, &trace.final_family(), &mu, &title);
        io::atomic_write(&dir.join("ball.svg"), svg.as_bytes())?;
    }
    Ok(())
}

fn surgery(cli: &Cli) -> Result<()> {
    let input: SurgeryInput = io::read_json(config_path(cli, None)?)?;
    let beta = StrainField::superposition(&input.mu, input.params.eps)?;
    let res = run_surgery(&input.mu, &beta, &input.region, &input.params, &input.tensor)?;
    let dichotomy = match &input.dichotomy {
        Some(p) => Some(dichotomy_from_surgery(&res, &input.region, p)?),
        None => None,
    };
    let out = SurgeryOutput {
        pass: res.diagnostics.pass(),
        balls: res.balls,
        curl: res.curl,
        reduced: res.reduced,
        steps: res.steps,
        diagnostics: res.diagnostics,
        dichotomy,
    };
    emit(cli, "surgery", &out)
}

fn stem(config: &ExperimentConfig, path: &Path) -> String {
    let raw = if config.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "experiment".into())
    } else {
        config.name.clone()
    };
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn experiment(cli: &Cli, positional: Option<&PathBuf>, svg: bool) -> Result<()> {
    let path = config_path(cli, positional)?;
    let mut config: ExperimentConfig = io::read_json(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let name = stem(&config, path);
    log(cli, format!("running {name} on {} ladder points", config.ladder.len()));
    let output = run_experiment(&config)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    io::atomic_write(&csv_path, output.csv()?.as_bytes())?;
    io::write_json(&json_path, &output)?;
    if svg && config.generator.is_some() {
        for (k, &eps) in config.ladder.iter().enumerate() {
            let conf = config.configuration(eps)?;
            let title = format!("{name}: eps = {eps:e}, N = {}", conf.mu.len());
            let picture = io::svg_snapshot(&config.domain, &[], &conf.mu, &title);
            io::atomic_write(&dir.join(format!("{name}-{k}.svg")), picture.as_bytes())?;
        }
    }
    println!("{}", output.summary());
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn report(cli: &Cli, positional: Option<&PathBuf>) -> Result<()> {
    let path = config_path(cli, positional)?;
    let output: ExperimentOutput = io::read_json(path)?;
    println!("{}", output.summary());
    let csv = output.csv()?;
    match &cli.out {
        Some(dir) => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
            let target = dir.join(format!("{name}.csv"));
            io::atomic_write(&target, csv.as_bytes())?;
            println!("wrote {}", target.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_input_from_numerics() {
        assert_eq!(exit_code(&Error::Precondition("bad".into())), 1);
        assert_eq!(exit_code(&Error::Schema { key: "k".into(), msg: "m".into() }), 1);
        assert_eq!(exit_code(&Error::Numerical("diverged".into())), 2);
        assert_eq!(exit_code(&Error::Internal("x".into())), 2);
    }

    #[test]
    fn output_stems_are_sanitized() {
        let mut cfg = ExperimentConfig::new(dislab::experiments::ExperimentKind::EnergySweep, None);
        assert_eq!(stem(&cfg, Path::new("dir/sweep.json")), "sweep");
        cfg.name = "a b/c".into();
        assert_eq!(stem(&cfg, Path::new("x.json")), "a_b_c");
    }
}
