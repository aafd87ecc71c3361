use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ankle_cli::{cmd_analyze, cmd_compare, cmd_simulate, CliError, Mode, Result, RunConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Simulate,
    Analyze,
    Compare,
}

/// Simulate prosthesis walking trials, analyze their stability and compare
/// controllers.
///
/// Exit status: 0 success, 1 invalid input or schema, 2 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "ankle", version)]
struct Args {
    /// What to run; defaults to `mode` from the config file.
    mode: Option<ModeArg>,
    /// Manifests to analyze, or candidate reports to compare.
    inputs: Vec<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the trial seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Baseline report for `compare`.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

fn run(args: Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.trial.seed = seed;
    }
    let mode = match args.mode {
        Some(ModeArg::Simulate) => Mode::Simulate,
        Some(ModeArg::Analyze) => Mode::Analyze,
        Some(ModeArg::Compare) => Mode::Compare,
        None => cfg.mode.ok_or_else(|| CliError::Config("no mode given".into()))?,
    };
    let out = args.out.or_else(|| cfg.paths.out.clone());

    match mode {
        Mode::Simulate => {
            let out = out.unwrap_or_else(|| PathBuf::from("trial"));
            let manifest = cmd_simulate(&cfg, &out)?;
            println!("{}", manifest.display());
        }
        Mode::Analyze => {
            let manifests = if args.inputs.is_empty() {
                cfg.paths.manifest.iter().cloned().collect()
            } else {
                args.inputs.clone()
            };
            if manifests.is_empty() {
                return Err(CliError::Config("no manifest to analyze".into()));
            }
            for m in &manifests {
                let dir = m.parent().unwrap_or(Path::new(".")).to_path_buf();
                let target = match &out {
                    Some(o) if manifests.len() > 1 => o.join(dir.file_name().unwrap_or_default()),
                    Some(o) => o.clone(),
                    None => dir,
                };
                let res = cmd_analyze(m, &cfg, &target)?;
                for w in &res.report.report.warnings {
                    eprintln!("warning: {}: {w}", m.display());
                }
                println!("{}", res.report_path.display());
            }
        }
        Mode::Compare => {
            let baseline = args
                .baseline
                .or_else(|| cfg.paths.baseline.clone())
                .ok_or_else(|| CliError::Config("compare needs --baseline".into()))?;
            let candidates = if args.inputs.is_empty() { cfg.paths.candidates.clone() } else { args.inputs };
            let out = out.unwrap_or_else(|| baseline.parent().unwrap_or(Path::new(".")).to_path_buf());
            cmd_compare(&baseline, &candidates, &cfg, &out)?;
            println!("{}", out.join("comparison.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation failures; keep 2 for I/O.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
