//! Two-argument lookup tables with bilinear evaluation and exact
//! piecewise-linear inversion along a monotone axis.
//!
//! Axis `a` is conventionally motor position (mm) and axis `b` ankle angle
//! (deg) for moment tables; the gait reference table uses gait fraction and
//! stride length instead.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LutError {
    #[error("coordinate {value} outside axis {axis:?} range [{lo}, {hi}]")]
    Domain {
        axis: LutAxis,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("target {target} outside reachable range [{lo}, {hi}]")]
    Unreachable { target: f64, lo: f64, hi: f64 },
    #[error("invalid lookup table: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LutAxis {
    A,
    B,
}

impl LutAxis {
    pub fn other(self) -> LutAxis {
        match self {
            LutAxis::A => LutAxis::B,
            LutAxis::B => LutAxis::A,
        }
    }
}

/// Direction of a validated monotone axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Increasing,
    Decreasing,
}

/// Anything that can report a joint moment for motor position `x` (mm) and
/// ankle angle `q` (deg), together with the local slope in `q`.
pub trait MomentModel {
    fn moment(&self, x: f64, q: f64) -> f64;
    fn dmoment_dq(&self, x: f64, q: f64) -> f64;
}

/// Tabulated map `values[i][j] = f(axis_a[i], axis_b[j])`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut2D {
    axis_a: Vec<f64>,
    axis_b: Vec<f64>,
    values: Vec<f64>,
    monotone_a: Option<Trend>,
    monotone_b: Option<Trend>,
    units_a: String,
    units_b: String,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<(), LutError> {
    if axis.len() < 2 {
        return Err(LutError::Invalid(format!("axis {name} needs at least 2 nodes")));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(LutError::Invalid(format!("axis {name} has non-finite node")));
    }
    if axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LutError::Invalid(format!("axis {name} not strictly increasing")));
    }
    Ok(())
}

/// Locate the cell containing `v`: returns `(i, t)` with
/// `v = axis[i] + t (axis[i+1] - axis[i])`, `t ∈ [0, 1]`.
fn locate(axis: &[f64], v: f64, tag: LutAxis) -> Result<(usize, f64), LutError> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if !(v >= lo && v <= hi) {
        return Err(LutError::Domain {
            axis: tag,
            value: v,
            lo,
            hi,
        });
    }
    let upper = axis.partition_point(|&node| node <= v);
    let i = upper.saturating_sub(1).min(axis.len() - 2);
    let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
    Ok((i, t))
}

fn lerp(p: f64, q: f64, t: f64) -> f64 {
    if t == 0.0 {
        p
    } else if t == 1.0 {
        q
    } else {
        p + t * (q - p)
    }
}

impl Lut2D {
    /// Build a table; every axis along which all slices are strictly monotone
    /// in one common direction is recorded as invertible.
    pub fn new(axis_a: Vec<f64>, axis_b: Vec<f64>, values: Vec<f64>) -> Result<Self, LutError> {
        check_axis("a", &axis_a)?;
        check_axis("b", &axis_b)?;
        if values.len() != axis_a.len() * axis_b.len() {
            return Err(LutError::Invalid(format!(
                "{} values for a {}x{} grid",
                values.len(),
                axis_a.len(),
                axis_b.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LutError::Invalid("non-finite table value".into()));
        }
        let mut lut = Self {
            axis_a,
            axis_b,
            values,
            monotone_a: None,
            monotone_b: None,
            units_a: String::new(),
            units_b: String::new(),
        };
        lut.monotone_a = lut.trend_along(LutAxis::A);
        lut.monotone_b = lut.trend_along(LutAxis::B);
        Ok(lut)
    }

    /// Build a table and require it to be strictly monotone along `axis`.
    pub fn with_monotone_axis(
        axis_a: Vec<f64>,
        axis_b: Vec<f64>,
        values: Vec<f64>,
        axis: LutAxis,
    ) -> Result<Self, LutError> {
        let lut = Self::new(axis_a, axis_b, values)?;
        if !lut.is_monotone_along(axis) {
            return Err(LutError::Invalid(format!(
                "slices along axis {axis:?} are not strictly monotone in a common direction"
            )));
        }
        Ok(lut)
    }

    pub fn with_units(mut self, units_a: &str, units_b: &str) -> Self {
        self.units_a = units_a.to_string();
        self.units_b = units_b.to_string();
        self
    }

    pub fn axis_a(&self) -> &[f64] {
        &self.axis_a
    }

    pub fn axis_b(&self) -> &[f64] {
        &self.axis_b
    }

    pub fn units(&self) -> (&str, &str) {
        (&self.units_a, &self.units_b)
    }

    pub fn range(&self, axis: LutAxis) -> (f64, f64) {
        let g = self.axis(axis);
        (g[0], g[g.len() - 1])
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis_b.len() + j]
    }

    pub fn is_monotone_along(&self, axis: LutAxis) -> bool {
        match axis {
            LutAxis::A => self.monotone_a.is_some(),
            LutAxis::B => self.monotone_b.is_some(),
        }
    }

    fn axis(&self, axis: LutAxis) -> &[f64] {
        match axis {
            LutAxis::A => &self.axis_a,
            LutAxis::B => &self.axis_b,
        }
    }

    fn trend_along(&self, axis: LutAxis) -> Option<Trend> {
        let (n_free, n_fixed) = (self.axis(axis).len(), self.axis(axis.other()).len());
        let at = |free: usize, fixed: usize| match axis {
            LutAxis::A => self.node(free, fixed),
            LutAxis::B => self.node(fixed, free),
        };
        let mut trend = None;
        for fixed in 0..n_fixed {
            for k in 0..n_free - 1 {
                let step = match at(k + 1, fixed).partial_cmp(&at(k, fixed)) {
                    Some(std::cmp::Ordering::Greater) => Trend::Increasing,
                    Some(std::cmp::Ordering::Less) => Trend::Decreasing,
                    _ => return None,
                };
                match trend {
                    None => trend = Some(step),
                    Some(t) if t != step => return None,
                    _ => {}
                }
            }
        }
        trend
    }

    /// Clamp a coordinate into the table's range along `axis`.
    pub fn clamp(&self, axis: LutAxis, v: f64) -> f64 {
        let (lo, hi) = self.range(axis);
        v.clamp(lo, hi)
    }

    /// Bilinear interpolation; exact at nodes, no extrapolation.
    pub fn eval(&self, a: f64, b: f64) -> Result<f64, LutError> {
        let (i, ta) = locate(&self.axis_a, a, LutAxis::A)?;
        let (j, tb) = locate(&self.axis_b, b, LutAxis::B)?;
        let lo = lerp(self.node(i, j), self.node(i, j + 1), tb);
        let hi = lerp(self.node(i + 1, j), self.node(i + 1, j + 1), tb);
        Ok(lerp(lo, hi, ta))
    }

    /// Partial derivative of the interpolant with respect to `b` (one-sided
    /// within the cell that `eval` would use).
    pub fn slope_b(&self, a: f64, b: f64) -> Result<f64, LutError> {
        let (i, ta) = locate(&self.axis_a, a, LutAxis::A)?;
        let (j, _) = locate(&self.axis_b, b, LutAxis::B)?;
        let h = self.axis_b[j + 1] - self.axis_b[j];
        let d0 = (self.node(i, j + 1) - self.node(i, j)) / h;
        let d1 = (self.node(i + 1, j + 1) - self.node(i + 1, j)) / h;
        Ok(lerp(d0, d1, ta))
    }

    /// Values of the 1-D slice through the nodes of the free axis at the
    /// given coordinate of the fixed axis.
    fn slice(&self, fixed_axis: LutAxis, coord: f64) -> Result<Vec<f64>, LutError> {
        let (k, t) = locate(self.axis(fixed_axis), coord, fixed_axis)?;
        Ok(match fixed_axis {
            LutAxis::B => (0..self.axis_a.len())
                .map(|i| lerp(self.node(i, k), self.node(i, k + 1), t))
                .collect(),
            LutAxis::A => (0..self.axis_b.len())
                .map(|j| lerp(self.node(k, j), self.node(k + 1, j), t))
                .collect(),
        })
    }

    /// Solve `eval = target` for the free coordinate while the other axis is
    /// held at `fixed.1`. The root is exact on the piecewise-linear slice.
    pub fn invert(&self, target: f64, fixed: (LutAxis, f64)) -> Result<f64, LutError> {
        let (fixed_axis, coord) = fixed;
        let free_axis = fixed_axis.other();
        let trend = match free_axis {
            LutAxis::A => self.monotone_a,
            LutAxis::B => self.monotone_b,
        }
        .ok_or_else(|| {
            LutError::Invalid(format!("axis {free_axis:?} is not declared monotone"))
        })?;
        let slice = self.slice(fixed_axis, coord)?;
        let grid = self.axis(free_axis);
        let (first, last) = (slice[0], slice[slice.len() - 1]);
        let (lo, hi) = match trend {
            Trend::Increasing => (first, last),
            Trend::Decreasing => (last, first),
        };
        if !(target >= lo && target <= hi) {
            return Err(LutError::Unreachable { target, lo, hi });
        }
        // Cell whose value span brackets the target.
        let k = match trend {
            Trend::Increasing => slice.partition_point(|&v| v <= target),
            Trend::Decreasing => slice.partition_point(|&v| v >= target),
        }
        .saturating_sub(1)
        .min(slice.len() - 2);
        let (v0, v1) = (slice[k], slice[k + 1]);
        let t = ((target - v0) / (v1 - v0)).clamp(0.0, 1.0);
        Ok(lerp(grid[k], grid[k + 1], t))
    }

    /// Write the table in its CSV interchange form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), LutError> {
        let io = |e: std::io::Error| LutError::Io(e.to_string());
        let mut text = String::new();
        let _ = writeln!(text, "# axis_a: {}", self.units_a);
        let _ = writeln!(text, "# axis_b: {}", self.units_b);
        for b in &self.axis_b {
            let _ = write!(text, ",{b}");
        }
        text.push('\n');
        for (i, a) in self.axis_a.iter().enumerate() {
            let _ = write!(text, "{a}");
            for j in 0..self.axis_b.len() {
                let _ = write!(text, ",{}", self.node(i, j));
            }
            text.push('\n');
        }
        out.write_all(text.as_bytes()).map_err(io)
    }

    /// Parse the CSV interchange form: two `# axis_x: units` comment lines,
    /// a header row holding the b grid (leading cell blank), then one row per
    /// a node beginning with its coordinate.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, LutError> {
        let mut units = (String::new(), String::new());
        let mut body = String::new();
        let mut first_body_line = None;
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| LutError::Io(e.to_string()))?;
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(u) = rest.strip_prefix("axis_a:") {
                    units.0 = u.trim().to_string();
                } else if let Some(u) = rest.strip_prefix("axis_b:") {
                    units.1 = u.trim().to_string();
                }
                body.push('\n');
                continue;
            }
            if first_body_line.is_none() && !trimmed.is_empty() {
                first_body_line = Some(idx as u64 + 1);
            }
            body.push_str(&line);
            body.push('\n');
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let parse = |field: &str, line: u64| {
            field.parse::<f64>().map_err(|_| LutError::Parse {
                line,
                msg: format!("not a number: {field:?}"),
            })
        };
        let mut axis_b = Vec::new();
        let mut axis_a = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| LutError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if axis_b.is_empty() {
                for f in rec.iter().skip(1) {
                    axis_b.push(parse(f, line)?);
                }
                if axis_b.is_empty() {
                    return Err(LutError::Parse {
                        line,
                        msg: "header row has no axis_b nodes".into(),
                    });
                }
                continue;
            }
            if rec.len() != axis_b.len() + 1 {
                return Err(LutError::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", axis_b.len() + 1, rec.len()),
                });
            }
            axis_a.push(parse(&rec[0], line)?);
            for f in rec.iter().skip(1) {
                values.push(parse(f, line)?);
            }
        }
        if first_body_line.is_none() {
            return Err(LutError::Parse {
                line: 0,
                msg: "empty table".into(),
            });
        }
        Ok(Self::new(axis_a, axis_b, values)?.with_units(&units.0, &units.1))
    }
}

impl MomentModel for Lut2D {
    /// Saturating lookup: queries are clamped to the table's bounding box.
    fn moment(&self, x: f64, q: f64) -> f64 {
        let x = self.clamp(LutAxis::A, x);
        let q = self.clamp(LutAxis::B, q);
        self.eval(x, q).expect("clamped query is in range")
    }

    fn dmoment_dq(&self, x: f64, q: f64) -> f64 {
        let x = self.clamp(LutAxis::A, x);
        let q = self.clamp(LutAxis::B, q);
        self.slope_b(x, q).expect("clamped query is in range")
    }
}

/// Affine stand-in for a measured moment map: `M = sigma · (x − rho · q)`.
///
/// With a series-elastic drive the motor retracting against dorsiflexion
/// loads the spring, so realistic maps have `sigma < 0`; either sign is
/// accepted as long as the map is non-degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMomentMap {
    /// Nm per mm of motor travel.
    pub sigma: f64,
    /// mm of spring travel per deg of ankle rotation.
    pub rho: f64,
}

impl SyntheticMomentMap {
    pub fn new(sigma: f64, rho: f64) -> Result<Self, LutError> {
        if !(sigma.is_finite() && sigma != 0.0) {
            return Err(LutError::Invalid(format!("sigma must be non-zero, got {sigma}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(LutError::Invalid(format!("rho must be ≥ 0, got {rho}")));
        }
        Ok(Self { sigma, rho })
    }

    /// Map of a linear spring of `stiffness_kn_per_m` acting on a lever of
    /// `lever_arm_m`: `M = k r (r q − x)`.
    pub fn from_sea(stiffness_kn_per_m: f64, lever_arm_m: f64) -> Result<Self, LutError> {
        // kN/m = N/mm, so k·r is Nm per mm of spring compression.
        let sigma = -stiffness_kn_per_m * lever_arm_m;
        let rho = lever_arm_m * 1000.0 * std::f64::consts::PI / 180.0;
        Self::new(sigma, rho)
    }

    /// Joint stiffness seen with the motor locked (Nm/deg).
    pub fn locked_stiffness(&self) -> f64 {
        -self.sigma * self.rho
    }
}

impl MomentModel for SyntheticMomentMap {
    fn moment(&self, x: f64, q: f64) -> f64 {
        self.sigma * (x - self.rho * q)
    }

    fn dmoment_dq(&self, _x: f64, _q: f64) -> f64 {
        -self.sigma * self.rho
    }
}

/// Tabulate `map` on the given grids (a = motor position, b = ankle angle).
/// The result is invertible along `a`, and along `b` too when `rho > 0`.
pub fn build_lut_from_map(
    map: &SyntheticMomentMap,
    a_grid: &[f64],
    b_grid: &[f64],
) -> Result<Lut2D, LutError> {
    let values = a_grid
        .iter()
        .flat_map(|&a| b_grid.iter().map(move |&b| map.moment(a, b)))
        .collect();
    Ok(Lut2D::with_monotone_axis(a_grid.to_vec(), b_grid.to_vec(), values, LutAxis::A)?
        .with_units("mm", "deg"))
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn affine_lut(sigma: f64, rho: f64) -> Lut2D {
        let map = SyntheticMomentMap::new(sigma, rho).unwrap();
        build_lut_from_map(&map, &uniform_grid(-40.0, 40.0, 1.0), &uniform_grid(-30.0, 30.0, 1.0))
            .unwrap()
    }

    #[test]
    fn eval_exact_at_nodes() {
        let a = vec![0.0, 1.5, 4.0];
        let b = vec![-1.0, 2.0];
        let v = vec![0.1, 0.7, -3.3, 9.25, 1e-3, 42.0];
        let lut = Lut2D::new(a.clone(), b.clone(), v.clone()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(lut.eval(a[i], b[j]).unwrap(), v[i * 2 + j]);
            }
        }
    }

    #[test]
    fn eval_affine_exact() {
        let a = vec![0.0, 1.0, 3.0, 7.0];
        let b = vec![-2.0, 0.0, 5.0];
        let v: Vec<f64> = a
            .iter()
            .flat_map(|&x| b.iter().map(move |&y| 2.0 * x + 3.0 * y))
            .collect();
        let lut = Lut2D::new(a, b, v).unwrap();
        for &(x, y) in &[(0.3, -1.7), (2.2, 4.9), (6.99, 0.01)] {
            assert!((lut.eval(x, y).unwrap() - (2.0 * x + 3.0 * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_synthetic_map() {
        let lut = affine_lut(5.0, 2.0);
        assert!((lut.eval(10.0, 3.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(lut.eval(41.0, 0.0), Err(LutError::Domain { .. })));
    }

    #[test]
    fn invert_examples() {
        let lut = affine_lut(5.0, 2.0);
        assert!((lut.invert(0.0, (LutAxis::B, 3.0)).unwrap() - 6.0).abs() < 1e-12);
        assert!((lut.invert(20.0, (LutAxis::B, 0.0)).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(
            lut.invert(1e4, (LutAxis::B, 0.0)),
            Err(LutError::Unreachable { .. })
        ));
    }

    #[test]
    fn invert_rejects_non_monotone_axis() {
        let lut = Lut2D::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
            .unwrap();
        assert!(matches!(
            lut.invert(0.5, (LutAxis::B, 0.5)),
            Err(LutError::Invalid(_))
        ));
        assert!(Lut2D::with_monotone_axis(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0, 1.0, 2.0],
            LutAxis::A
        )
        .is_err());
    }

    #[test]
    fn build_examples() {
        let map = SyntheticMomentMap::new(1.0, 0.0).unwrap();
        let lut = build_lut_from_map(&map, &[0.0, 2.0, 5.0], &[0.0, 1.0]).unwrap();
        assert_eq!(lut.node(2, 0), 5.0);
        assert_eq!(lut.node(2, 1), 5.0);
        assert!(!lut.is_monotone_along(LutAxis::B));

        let map = SyntheticMomentMap::new(5.0, 2.0).unwrap();
        let lut = build_lut_from_map(&map, &[0.0, 10.0], &[0.0, 5.0]).unwrap();
        assert_eq!(
            [lut.node(0, 0), lut.node(0, 1), lut.node(1, 0), lut.node(1, 1)],
            [0.0, -50.0, 50.0, 0.0]
        );
        assert!(lut.is_monotone_along(LutAxis::A));
    }

    #[test]
    fn sea_map_is_restoring() {
        let map = SyntheticMomentMap::from_sea(377.0, 0.03).unwrap();
        assert!((map.sigma + 11.31).abs() < 1e-9);
        assert!((map.rho - 30f64.to_radians()).abs() < 1e-9);
        assert!(map.dmoment_dq(0.0, 0.0) > 0.0);
        assert!((map.locked_stiffness() - 5.921).abs() < 1e-3);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let lut = affine_lut(-3.0, 0.5);
        let mut buf = Vec::new();
        lut.write_csv(&mut buf).unwrap();
        let back = Lut2D::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, lut);

        let bad = "# axis_a: mm\n# axis_b: deg\n,0,1\n0,1,2\n1,x,4\n";
        match Lut2D::read_csv(bad.as_bytes()) {
            Err(LutError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn invert_eval_round_trip(
            sigma in prop_oneof![-20.0..-0.5f64, 0.5..20.0f64],
            rho in 0.1..3.0f64,
            q in -30.0..30.0f64,
            frac in 0.0..1.0f64,
        ) {
            let lut = affine_lut(sigma, rho);
            let slice_lo = lut.eval(-40.0, q).unwrap();
            let slice_hi = lut.eval(40.0, q).unwrap();
            let target = slice_lo + frac * (slice_hi - slice_lo);
            let x = lut.invert(target, (LutAxis::B, q)).unwrap();
            prop_assert!((lut.eval(x, q).unwrap() - target).abs() <= 1e-9);
            let exact = target / sigma + rho * q;
            prop_assert!((x - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
        }

        #[test]
        fn eval_continuous_across_cell_edges(
            j in 1usize..60,
            x in -40.0..40.0f64,
        ) {
            let lut = affine_lut(-7.0, 1.3);
            let b = lut.axis_b()[j];
            let below = lut.eval(x, b - 1e-9).unwrap();
            let at = lut.eval(x, b).unwrap();
            prop_assert!((below - at).abs() < 1e-6);
        }

        #[test]
        fn monotone_validation_rejects_repeats(k in 0usize..4) {
            let mut v: Vec<f64> = (0..5).map(|i| i as f64).flat_map(|x| [x, x + 0.5]).collect();
            v[2 * (k + 1)] = v[2 * k];
            prop_assert!(Lut2D::with_monotone_axis(
                (0..5).map(|i| i as f64).collect(), vec![0.0, 1.0], v, LutAxis::A
            ).is_err());
        }
    }
}
