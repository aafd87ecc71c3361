//! Trial recordings on disk: one CSV per channel group plus a JSON manifest.
//!
//! | file             | columns                                                                 | units            |
//! |------------------|-------------------------------------------------------------------------|------------------|
//! | `markers.csv`    | `frame`, then `<MARKER>_ML/_AP/_VT` for LASI, RASI, LPSI, RPSI, LHEEL   | mm               |
//! | `cop.csv`        | `frame, left_ml, left_ap, left_fz, right_ml, right_ap, right_fz`        | mm, N            |
//! | `prosthesis.csv` | `frame, t, mode, x, q, moment, tibia_omega, gait_percent, stride_length, q_d, x_cmd, deflection` | s, mm, deg, Nm, deg/s |
//! | `events.csv`     | `side, frame`                                                           | sample index     |
//!
//! Real values are written with 9 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ankle_core::control::{ControllerMode, ProsthesisState};
use ankle_core::trial::{CopSample, Marker, Point3, ProsthesisLog, TrialRecording, TrialSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_SCHEMA: &str = "ankle-trial/1";
pub const CHANNELS: [&str; 4] = ["markers", "cop", "prosthesis", "events"];

/// Round to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x.is_finite() {
        format!("{x:.8e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// Shortest decimal text of `x` rounded to 9 significant digits.
pub fn fmt9(x: f64) -> String {
    format!("{}", round9(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub rate: f64,
    pub n_frames: usize,
    pub excluded_strides: usize,
    /// Channel group name → file name relative to the manifest.
    pub channels: BTreeMap<String, String>,
    /// Trial settings the recording was simulated from.
    pub spec: TrialSpec,
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

fn marker_header() -> Vec<String> {
    let mut h = vec!["frame".to_string()];
    for m in Marker::ALL {
        for axis in ["ML", "AP", "VT"] {
            h.push(format!("{}_{axis}", m.name()));
        }
    }
    h
}

const COP_HEADER: [&str; 7] = ["frame", "left_ml", "left_ap", "left_fz", "right_ml", "right_ap", "right_fz"];
const PROSTHESIS_HEADER: [&str; 12] = [
    "frame",
    "t",
    "mode",
    "x",
    "q",
    "moment",
    "tibia_omega",
    "gait_percent",
    "stride_length",
    "q_d",
    "x_cmd",
    "deflection",
];

/// Write all channel files and the manifest into `dir`; returns the
/// manifest path.
pub fn write_trial(dir: &Path, rec: &TrialRecording, spec: &TrialSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let path = dir.join("markers.csv");
    let mut w = create(&path)?;
    w.write_record(marker_header()).map_err(|e| csv_err(&path, e))?;
    for (i, frame) in rec.markers.iter().enumerate() {
        let mut row = vec![i.to_string()];
        for p in frame {
            row.extend([fmt9(p.ml), fmt9(p.ap), fmt9(p.vt)]);
        }
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("cop.csv");
    let mut w = create(&path)?;
    w.write_record(COP_HEADER).map_err(|e| csv_err(&path, e))?;
    for (i, (l, r)) in rec.cop_left.iter().zip(&rec.cop_right).enumerate() {
        let row = [i.to_string(), fmt9(l.ml), fmt9(l.ap), fmt9(l.fz), fmt9(r.ml), fmt9(r.ap), fmt9(r.fz)];
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("prosthesis.csv");
    let mut w = create(&path)?;
    w.write_record(PROSTHESIS_HEADER).map_err(|e| csv_err(&path, e))?;
    for (i, p) in rec.prosthesis.iter().enumerate() {
        let s = &p.state;
        let row = [
            i.to_string(),
            fmt9(p.t),
            p.mode.name().to_string(),
            fmt9(s.x),
            fmt9(s.q),
            fmt9(s.moment),
            fmt9(s.tibia_omega),
            fmt9(p.gait_percent),
            fmt9(p.stride_length),
            fmt9(p.q_d),
            fmt9(p.x_cmd),
            fmt9(p.deflection),
        ];
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("events.csv");
    let mut w = create(&path)?;
    w.write_record(["side", "frame"]).map_err(|e| csv_err(&path, e))?;
    for (side, ev) in [("left", &rec.events_left), ("right", &rec.events_right)] {
        for e in ev {
            w.write_record([side, &e.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        rate: rec.rate,
        n_frames: rec.len(),
        excluded_strides: rec.excluded_strides,
        channels: CHANNELS.iter().map(|c| (c.to_string(), format!("{c}.csv"))).collect(),
        spec: spec.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Reads one CSV file with an exact header, handing each record and its
/// line number to `row`.
fn read_csv<F>(path: &Path, header: &[&str], mut row: F) -> Result<()>
where
    F: FnMut(&csv::StringRecord, u64) -> std::result::Result<(), String>,
{
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: u64, msg: String| CliError::Parse { path: path.display().to_string(), line, msg };
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header {:?}", found.iter().collect::<Vec<_>>())));
    }
    for rec in r.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(line, e.to_string()));
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        row(&rec, line).map_err(|m| parse_err(line, m))?;
    }
    Ok(())
}

fn num(rec: &csv::StringRecord, i: usize) -> std::result::Result<f64, String> {
    let s = &rec[i];
    s.trim().parse::<f64>().map_err(|_| format!("field {} is not a number: {s:?}", i + 1))
}

fn index(rec: &csv::StringRecord, i: usize) -> std::result::Result<usize, String> {
    let s = &rec[i];
    s.trim().parse::<usize>().map_err(|_| format!("field {} is not a sample index: {s:?}", i + 1))
}

fn frame_check(rec: &csv::StringRecord, expected: usize) -> std::result::Result<(), String> {
    let f = index(rec, 0)?;
    if f != expected {
        return Err(format!("frame {f} out of sequence, expected {expected}"));
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(CliError::Schema(format!("{}: schema {:?}, expected {MANIFEST_SCHEMA:?}", path.display(), m.schema)));
    }
    Ok(m)
}

/// Load a recording through its manifest.
pub fn read_trial(manifest_path: &Path) -> Result<(TrialRecording, Manifest)> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let channel = |name: &str| -> Result<PathBuf> {
        let file = manifest.channels.get(name).ok_or_else(|| CliError::MissingChannel(name.into()))?;
        let p = dir.join(file);
        if !p.is_file() {
            return Err(CliError::MissingChannel(format!("{name} ({})", p.display())));
        }
        Ok(p)
    };

    let n = manifest.n_frames;
    let mut markers = Vec::with_capacity(n);
    let header = marker_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    read_csv(&channel("markers")?, &header, |r, _| {
        frame_check(r, markers.len())?;
        let mut frame = [Point3::default(); 5];
        for (k, p) in frame.iter_mut().enumerate() {
            *p = Point3 { ml: num(r, 1 + 3 * k)?, ap: num(r, 2 + 3 * k)?, vt: num(r, 3 + 3 * k)? };
        }
        markers.push(frame);
        Ok(())
    })?;

    let (mut cop_left, mut cop_right) = (Vec::with_capacity(n), Vec::with_capacity(n));
    read_csv(&channel("cop")?, &COP_HEADER, |r, _| {
        frame_check(r, cop_left.len())?;
        cop_left.push(CopSample { ml: num(r, 1)?, ap: num(r, 2)?, fz: num(r, 3)? });
        cop_right.push(CopSample { ml: num(r, 4)?, ap: num(r, 5)?, fz: num(r, 6)? });
        Ok(())
    })?;

    let mut prosthesis = Vec::with_capacity(n);
    read_csv(&channel("prosthesis")?, &PROSTHESIS_HEADER, |r, _| {
        frame_check(r, prosthesis.len())?;
        let mode = match &r[2] {
            "TC" => ControllerMode::Tc,
            "AC" => ControllerMode::Ac,
            other => return Err(format!("unknown controller mode {other:?}")),
        };
        prosthesis.push(ProsthesisLog {
            t: num(r, 1)?,
            mode,
            state: ProsthesisState { x: num(r, 3)?, q: num(r, 4)?, moment: num(r, 5)?, tibia_omega: num(r, 6)? },
            gait_percent: num(r, 7)?,
            stride_length: num(r, 8)?,
            q_d: num(r, 9)?,
            x_cmd: num(r, 10)?,
            deflection: num(r, 11)?,
        });
        Ok(())
    })?;

    let (mut events_left, mut events_right) = (Vec::new(), Vec::new());
    read_csv(&channel("events")?, &["side", "frame"], |r, _| {
        let e = index(r, 1)?;
        match &r[0] {
            "left" => events_left.push(e),
            "right" => events_right.push(e),
            other => return Err(format!("unknown side {other:?}")),
        }
        Ok(())
    })?;

    for (name, len) in [("markers", markers.len()), ("cop", cop_left.len()), ("prosthesis", prosthesis.len())] {
        if len != n {
            return Err(CliError::Schema(format!("{name} has {len} frames, manifest declares {n}")));
        }
    }
    let rec = TrialRecording {
        rate: manifest.rate,
        markers,
        cop_left,
        cop_right,
        prosthesis,
        events_left,
        events_right,
        excluded_strides: manifest.excluded_strides,
    };
    rec.validate().map_err(|e| CliError::Schema(e.to_string()))?;
    Ok((rec, manifest))
}

/// Write rows of already formatted fields.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.1), "0.1");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(123456789012.0), "123456789000");
        assert_eq!(fmt9(-2.5e-7), "-0.00000025");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(round9(round9(std::f64::consts::PI)), round9(std::f64::consts::PI));
    }
}
