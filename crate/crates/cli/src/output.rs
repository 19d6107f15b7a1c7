//! Output artifact writers: JSON reports, trace/event CSVs, and the
//! confidence-vs-count curve. All writers are byte-deterministic for a
//! fixed config and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use elver_core::{DetectionEvent, TrialRecord};

use crate::AppError;

/// Write per-trial traces: one row per incident electron.
pub fn write_traces_csv(
    path: &Path,
    records: &[TrialRecord],
    config_hash: &str,
) -> Result<(), AppError> {
    let mut w = BufWriter::new(File::create(path).map_err(AppError::io)?);
    writeln!(w, "# config_hash={config_hash}").map_err(AppError::io)?;
    writeln!(w, "trial,n_detected,n_incident,posterior").map_err(AppError::io)?;
    for r in records {
        for s in &r.trace.steps {
            writeln!(
                w,
                "{},{},{},{}",
                r.trial, s.electrons_detected, s.electrons_incident, s.posterior_right
            )
            .map_err(AppError::io)?;
        }
    }
    Ok(())
}

/// Write the event log: `trial,event_index,outcome,x,y` with empty pixel
/// columns for absorbed electrons.
pub fn write_events_csv(
    path: &Path,
    records: &[TrialRecord],
    config_hash: &str,
) -> Result<(), AppError> {
    let mut w = BufWriter::new(File::create(path).map_err(AppError::io)?);
    writeln!(w, "# config_hash={config_hash}").map_err(AppError::io)?;
    writeln!(w, "trial,event_index,outcome,x,y").map_err(AppError::io)?;
    for r in records {
        for (i, e) in r.trace.events.iter().enumerate() {
            match e {
                DetectionEvent::Absorbed => {
                    writeln!(w, "{},{},absorbed,,", r.trial, i).map_err(AppError::io)?
                }
                DetectionEvent::Detected { y, x } => {
                    writeln!(w, "{},{},detected,{},{}", r.trial, i, x, y).map_err(AppError::io)?
                }
            }
        }
    }
    Ok(())
}

/// Read an event log written by [`write_events_csv`] back into per-trial
/// event sequences (trial indices are the row group keys).
pub fn read_events_csv(path: &Path) -> Result<Vec<(u64, Vec<DetectionEvent>)>, AppError> {
    let reader = BufReader::new(File::open(path).map_err(AppError::io)?);
    let mut out: Vec<(u64, Vec<DetectionEvent>)> = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(AppError::io)?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("trial,") {
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 5 {
            return Err(AppError::validation(format!("bad event row: {t}")));
        }
        let trial: u64 = parts[0]
            .parse()
            .map_err(|_| AppError::validation(format!("bad trial id: {t}")))?;
        let event = match parts[2] {
            "absorbed" => DetectionEvent::Absorbed,
            "detected" => {
                let x: usize = parts[3]
                    .parse()
                    .map_err(|_| AppError::validation(format!("bad x: {t}")))?;
                let y: usize = parts[4]
                    .parse()
                    .map_err(|_| AppError::validation(format!("bad y: {t}")))?;
                DetectionEvent::Detected { y, x }
            }
            other => return Err(AppError::validation(format!("bad outcome {other:?}"))),
        };
        match out.last_mut() {
            Some((id, events)) if *id == trial => events.push(event),
            _ => out.push((trial, vec![event])),
        }
    }
    Ok(out)
}

/// Plot-ready confidence curve: per detected-electron count, the mean and
/// quantiles of the posterior across trials (decided trials carry their
/// final posterior forward).
pub fn write_confidence_curve_csv(
    path: &Path,
    records: &[TrialRecord],
    config_hash: &str,
) -> Result<(), AppError> {
    let max_detected = records
        .iter()
        .filter_map(|r| r.trace.steps.last().map(|s| s.electrons_detected))
        .max()
        .unwrap_or(0);
    let mut w = BufWriter::new(File::create(path).map_err(AppError::io)?);
    writeln!(w, "# config_hash={config_hash}").map_err(AppError::io)?;
    writeln!(w, "n_detected,mean_posterior,median_posterior,q10_posterior,q90_posterior")
        .map_err(AppError::io)?;
    for k in 0..=max_detected {
        let mut values: Vec<f64> = records
            .iter()
            .map(|r| posterior_at_detected(r, k))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let q = |p: f64| values[((p * (n - 1) as f64).round() as usize).min(n - 1)];
        writeln!(w, "{},{},{},{},{}", k, mean, q(0.5), q(0.1), q(0.9)).map_err(AppError::io)?;
    }
    Ok(())
}

/// Posterior of a trial after its k-th detected electron (prior for k=0,
/// final value carried forward once the trial has decided).
fn posterior_at_detected(record: &TrialRecord, k: u64) -> f64 {
    if k == 0 {
        return 0.5;
    }
    let mut last = 0.5;
    for s in &record.trace.steps {
        if s.electrons_detected > k {
            return last;
        }
        if s.electrons_detected >= 1 {
            last = s.posterior_right;
        }
    }
    last
}

/// Serialize a JSON report deterministically (struct field order).
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut w = BufWriter::new(File::create(path).map_err(AppError::io)?);
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::compute_msg(format!("json serialization: {e}")))?;
    w.write_all(text.as_bytes()).map_err(AppError::io)?;
    w.write_all(b"\n").map_err(AppError::io)?;
    Ok(())
}
