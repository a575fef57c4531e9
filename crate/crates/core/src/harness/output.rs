use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{DecayPoint, HarnessError, PhasePoint, RunData, RunResult};
use crate::observables::EchoTrace;

pub fn decay_csv(points: &[DecayPoint]) -> String {
    let mut s = String::from("T_ms,eta,stderr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.t_ms, p.eta, p.stderr);
    }
    s
}

pub fn phase_csv(points: &[PhasePoint]) -> String {
    let mut s = String::from("phi_deg,I_n,stderr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.phi_deg, p.i_n, p.stderr);
    }
    s
}

pub fn trace_csv(trace: &EchoTrace) -> String {
    let mut s = String::from("t_us,re_P,im_P,intensity\n");
    for (k, (p, i)) in trace.polarization().iter().zip(trace.intensity()).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", trace.time(k), p.re, p.im, i);
    }
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes `<kind>.csv`, `<kind>.json` and, with `traces`, one
/// `trace_<label>.csv` per recorded echo. Returns the written paths.
pub fn write_outputs(
    result: &RunResult,
    dir: &Path,
    traces: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let name = result.kind.name();
    let csv = match &result.data {
        RunData::Decay(p) => decay_csv(p),
        RunData::Phase(p) => phase_csv(p),
    };
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| HarnessError::Io(format!("serializing result: {e}")))?;
    let mut out = vec![
        write(dir.join(format!("{name}.csv")), &csv)?,
        write(dir.join(format!("{name}.json")), &json)?,
    ];
    if traces {
        for (label, t) in &result.traces {
            out.push(write(dir.join(format!("trace_{label}.csv")), &trace_csv(t))?);
        }
    }
    Ok(out)
}
