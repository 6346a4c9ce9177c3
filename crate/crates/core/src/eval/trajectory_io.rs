//! Trajectory files: CSV with header `time,rx,ry,rz,tx,ty,tz`, one pose per
//! row, nine significant digits.

use super::EvalError;
use crate::geometry::Pose6;
use crate::sim::TimedPose;
use nalgebra::Vector6;
use std::path::Path;

pub const HEADER: &str = "time,rx,ry,rz,tx,ty,tz";

/// `v` to nine significant digits, fixed notation for moderate magnitudes.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).expect("float exponent");
    if !(-5..9).contains(&exp) {
        return sci;
    }
    let fixed = format!("{:.*}", (8 - exp).max(0) as usize, v);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub fn to_csv(traj: &[TimedPose]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for tp in traj {
        out.push_str(&format_sig9(tp.time));
        for v in tp.pose.to_vec6().iter() {
            out.push(',');
            out.push_str(&format_sig9(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &[TimedPose]) -> Result<(), EvalError> {
    std::fs::write(path, to_csv(traj))?;
    Ok(())
}

pub fn parse_csv(text: &str, path: &str) -> Result<Vec<TimedPose>, EvalError> {
    let err = |line: usize, reason: String| EvalError::Trajectory {
        path: path.to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(err(1, format!("expected header `{HEADER}`"))),
    }
    let mut out: Vec<TimedPose> = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(k + 1, e.to_string()))?;
        if vals.len() != 7 {
            return Err(err(k + 1, format!("expected 7 fields, got {}", vals.len())));
        }
        let time = vals[0];
        if out.last().is_some_and(|p| p.time >= time) {
            return Err(err(k + 1, "timestamps must increase strictly".into()));
        }
        out.push(TimedPose {
            time,
            pose: Pose6::from_vec6(&Vector6::from_column_slice(&vals[1..])),
        });
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string())
}
