//! Report, plot-data and comparison documents.
//!
//! `report.json` holds a [`ReportFile`]; `comparison.json` a [`Comparison`].
//! Both are plain JSON with real values rounded to 9 significant digits;
//! masked stiffness samples and undefined statistics are `null`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use ankle_core::analysis::{PlotData, StabilityReport};
use ankle_core::control::ControllerMode;
use ankle_core::plant::Terrain;
use ankle_core::signal::AxisTag;
use ankle_core::stability::{delta_lambda, wilcoxon_ranksum, MeanSd, MosCycles, MosSide};
use ankle_core::trial::TrialSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::persist::{fmt9, round9, write_rows, write_text};

pub const REPORT_SCHEMA: &str = "ankle-stability-report/1";
pub const COMPARISON_SCHEMA: &str = "ankle-comparison/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub label: String,
    pub controller: ControllerMode,
    /// Desired stiffness, Nm/deg; absent for the tibia controller.
    pub k_d: Option<f64>,
    /// Ground stiffness, kN/m; absent on rigid ground.
    pub ground_stiffness: Option<f64>,
    pub seed: u64,
}

impl TrialMeta {
    pub fn from_spec(spec: &TrialSpec) -> Self {
        let mode = spec.controller.mode;
        let k_d = (mode == ControllerMode::Ac).then_some(spec.controller.k_d);
        let ground_stiffness = match spec.plant.terrain {
            Terrain::Rigid => None,
            Terrain::Compliant { stiffness } => Some(stiffness),
        };
        let mut label = match k_d {
            Some(k) => format!("AC-{}", fmt9(k)),
            None => "TC".to_string(),
        };
        match ground_stiffness {
            Some(k) => write!(label, " @ {} kN/m", fmt9(k)).unwrap(),
            None => label.push_str(" @ rigid"),
        }
        Self { label, controller: mode, k_d, ground_stiffness, seed: spec.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema: String,
    pub trial: TrialMeta,
    pub report: StabilityReport,
}

/// Round every real number in a JSON tree to 9 significant digits.
fn round_tree(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round9(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_tree),
        Value::Object(o) => o.values_mut().for_each(round_tree),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    round_tree(&mut v);
    serde_json::to_string_pretty(&v).expect("JSON value serializes") + "\n"
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let r: ReportFile =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    if r.schema != REPORT_SCHEMA {
        return Err(CliError::Schema(format!("{}: schema {:?}, expected {REPORT_SCHEMA:?}", path.display(), r.schema)));
    }
    Ok(r)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt9).unwrap_or_default()
}

/// Plot CSVs: divergence curves, phase portrait, moment–angle loop and
/// stiffness profile.
pub fn write_plots(dir: &Path, plots: &PlotData, report: &StabilityReport) -> Result<()> {
    if !plots.divergence.is_empty() {
        let mut header = vec!["stride".to_string()];
        header.extend(plots.divergence.iter().map(|(a, _)| format!("{}_ln_divergence", a.name())));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let len = plots.divergence[0].1.len();
        let pps = plots.points_per_stride.max(1) as f64;
        let rows = (0..len).map(|i| {
            let mut row = vec![fmt9(i as f64 / pps)];
            row.extend(plots.divergence.iter().map(|(_, c)| fmt9(c[i])));
            row
        });
        write_rows(&dir.join("divergence.csv"), &header, rows)?;
    }
    let n = plots.gait_percent.len();
    write_rows(
        &dir.join("phase_portrait.csv"),
        &["gait_percent", "angle_deg", "angle_rate_deg_s"],
        (0..n).map(|i| vec![fmt9(plots.gait_percent[i]), fmt9(plots.angle[i]), fmt9(plots.angle_rate[i])]),
    )?;
    write_rows(
        &dir.join("moment_angle.csv"),
        &["gait_percent", "angle_deg", "moment_nm"],
        (0..n).map(|i| vec![fmt9(plots.gait_percent[i]), fmt9(plots.angle[i]), fmt9(plots.moment[i])]),
    )?;
    let p = &report.stiffness.profile;
    write_rows(
        &dir.join("stiffness_profile.csv"),
        &["stance_percent", "stiffness_nm_per_deg"],
        p.stance_percent.iter().zip(&p.stiffness).map(|(s, k)| vec![fmt9(*s), opt(*k)]),
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentDelta {
    pub baseline: MeanSd,
    pub candidate: MeanSd,
    /// Candidate minus baseline; negative means more stable.
    pub delta: f64,
    pub improved: bool,
    /// Rank-sum test over per-window values.
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDelta {
    pub axis: AxisTag,
    pub lambda_s: ExponentDelta,
    pub lambda_l: ExponentDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosComparison {
    pub side: MosSide,
    /// "ML" or "AP".
    pub direction: String,
    pub baseline: Option<MeanSd>,
    pub candidate: Option<MeanSd>,
    /// Candidate mean minus baseline mean, mm.
    pub difference: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateComparison {
    pub label: String,
    pub lyapunov: Vec<AxisDelta>,
    pub mos: Vec<MosComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema: String,
    pub alpha: f64,
    pub baseline: String,
    pub candidates: Vec<CandidateComparison>,
}

fn exponent_delta(base: (&MeanSd, &[f64]), cand: (&MeanSd, &[f64]), alpha: f64) -> Result<ExponentDelta> {
    let delta = delta_lambda(cand.0.mean, base.0.mean);
    let test = wilcoxon_ranksum(cand.1, base.1, alpha)
        .map_err(|e| CliError::Schema(format!("per-window exponents: {e}")))?;
    Ok(ExponentDelta {
        baseline: *base.0,
        candidate: *cand.0,
        delta,
        improved: delta < 0.0,
        p_value: test.p_value,
        significant: test.significant,
    })
}

fn mos_entries(r: &StabilityReport) -> [(MosSide, &'static str, &MosCycles); 4] {
    let m = &r.mos;
    [
        (MosSide::Left, "ML", &m.left_ml),
        (MosSide::Left, "AP", &m.left_ap),
        (MosSide::Right, "ML", &m.right_ml),
        (MosSide::Right, "AP", &m.right_ap),
    ]
}

/// Compare one candidate report against the baseline.
pub fn compare_reports(base: &ReportFile, cand: &ReportFile, alpha: f64) -> Result<CandidateComparison> {
    let axes = |r: &ReportFile| r.report.lyapunov.iter().map(|a| a.axis.name()).collect::<BTreeSet<_>>();
    if axes(base) != axes(cand) {
        return Err(CliError::Schema(format!(
            "'{}' has axes {:?}, baseline has {:?}",
            cand.trial.label,
            axes(cand),
            axes(base)
        )));
    }
    let mut lyapunov = Vec::new();
    for b in &base.report.lyapunov {
        let c = cand.report.axis(b.axis).expect("axis sets match");
        lyapunov.push(AxisDelta {
            axis: b.axis,
            lambda_s: exponent_delta((&b.lambda_s, &b.lambda_s_windows), (&c.lambda_s, &c.lambda_s_windows), alpha)?,
            lambda_l: exponent_delta((&b.lambda_l, &b.lambda_l_windows), (&c.lambda_l, &c.lambda_l_windows), alpha)?,
        });
    }
    let mut mos = Vec::new();
    for ((side, dir, b), (_, _, c)) in mos_entries(&base.report).into_iter().zip(mos_entries(&cand.report)) {
        let (bs, cs) = (b.summary(), c.summary());
        let test = wilcoxon_ranksum(&c.values, &b.values, alpha).ok();
        mos.push(MosComparison {
            side,
            direction: dir.to_string(),
            baseline: bs,
            candidate: cs,
            difference: bs.zip(cs).map(|(b, c)| c.mean - b.mean),
            p_value: test.map(|t| t.p_value),
            significant: test.is_some_and(|t| t.significant),
        });
    }
    Ok(CandidateComparison { label: cand.trial.label.clone(), lyapunov, mos })
}

fn pm(m: &MeanSd) -> String {
    format!("{:.2} ± {:.2}", m.mean, m.sd)
}

fn pm_opt(m: &Option<MeanSd>) -> String {
    m.as_ref().map_or("–".to_string(), pm)
}

/// Markdown tables: exponents per axis with Δλ (bold when the candidate is
/// more stable, `*` when the rank-sum test is significant), then margins.
pub fn comparison_markdown(c: &Comparison) -> String {
    let mut s = String::new();
    writeln!(s, "# Comparison against {}\n", c.baseline).unwrap();
    writeln!(s, "Bold Δλ: lower than baseline (more stable). `*`: rank-sum p < {}.\n", c.alpha).unwrap();
    for cand in &c.candidates {
        writeln!(s, "## {}\n", cand.label).unwrap();
        writeln!(s, "| Axis | λ_S baseline | λ_S | Δλ_S | λ_L baseline | λ_L | Δλ_L |").unwrap();
        writeln!(s, "|---|---|---|---|---|---|---|").unwrap();
        let cell = |d: &ExponentDelta| {
            let mut v = format!("{:+.2}", d.delta);
            if d.improved {
                v = format!("**{v}**");
            }
            if d.significant {
                v.push('*');
            }
            v
        };
        for a in &cand.lyapunov {
            writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                a.axis.name(),
                pm(&a.lambda_s.baseline),
                pm(&a.lambda_s.candidate),
                cell(&a.lambda_s),
                pm(&a.lambda_l.baseline),
                pm(&a.lambda_l.candidate),
                cell(&a.lambda_l),
            )
            .unwrap();
        }
        writeln!(s, "\n| Side | Direction | MOS baseline (mm) | MOS (mm) | p |").unwrap();
        writeln!(s, "|---|---|---|---|---|").unwrap();
        for m in &cand.mos {
            let side = match m.side {
                MosSide::Left => "left",
                MosSide::Right => "right",
            };
            let p = m.p_value.map_or("–".to_string(), |p| format!("{p:.3}{}", if m.significant { "*" } else { "" }));
            writeln!(s, "| {side} | {} | {} | {} | {p} |", m.direction, pm_opt(&m.baseline), pm_opt(&m.candidate)).unwrap();
        }
        s.push('\n');
    }
    s
}
