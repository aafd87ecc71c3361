use std::path::{Path, PathBuf};

use ankle_core::analysis::analyze_trial;
use ankle_core::trial::generate_trial;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::persist::{read_trial, write_trial};
use crate::report::{
    compare_reports, comparison_markdown, read_report, write_json, write_plots, Comparison, ReportFile,
    COMPARISON_SCHEMA, REPORT_SCHEMA,
};

/// Simulate the configured trial into `out`; returns the manifest path.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let spec = cfg.trial.to_spec();
    let rec = generate_trial(&spec)?;
    write_trial(out, &rec, &spec)
}

pub struct AnalyzeOutput {
    pub report_path: PathBuf,
    pub report: ReportFile,
}

/// Analyze the trial behind `manifest`, writing `report.json` and plot CSVs
/// into `out`.
pub fn cmd_analyze(manifest: &Path, cfg: &RunConfig, out: &Path) -> Result<AnalyzeOutput> {
    let (rec, m) = read_trial(manifest)?;
    let analysis = analyze_trial(&rec, &cfg.analysis)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let report = ReportFile {
        schema: REPORT_SCHEMA.into(),
        trial: crate::report::TrialMeta::from_spec(&m.spec),
        report: analysis.report,
    };
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    write_plots(out, &analysis.plots, &report.report)?;
    Ok(AnalyzeOutput { report_path, report })
}

/// Compare candidate reports with a baseline; writes `comparison.json` and
/// `comparison.md` into `out`.
pub fn cmd_compare(baseline: &Path, candidates: &[PathBuf], cfg: &RunConfig, out: &Path) -> Result<Comparison> {
    if candidates.is_empty() {
        return Err(CliError::Config("no candidate reports to compare".into()));
    }
    let base = read_report(baseline)?;
    let alpha = cfg.compare.alpha;
    let candidates = candidates
        .iter()
        .map(|p| compare_reports(&base, &read_report(p)?, alpha))
        .collect::<Result<Vec<_>>>()?;
    let cmp = Comparison {
        schema: COMPARISON_SCHEMA.into(),
        alpha,
        baseline: base.trial.label.clone(),
        candidates,
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_json(&out.join("comparison.json"), &cmp)?;
    crate::persist::write_text(&out.join("comparison.md"), &comparison_markdown(&cmp))?;
    Ok(cmp)
}
