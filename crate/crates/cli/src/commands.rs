//! Subcommand implementations.

use std::path::Path;

use serde::Serialize;

use elver_core::{
    electron_wavelength, gratings::linear_fit, io as core_io, replay_trial, run_ensemble,
    sweep_energies, ChannelTransmission, Orientation, SweepPoint,
    TrialStatistics, Verdict,
};

use crate::config::ResolvedConfig;
use crate::output;
use crate::pipeline::build_chain;
use crate::AppError;

/// `wavelength`: print the de Broglie wavelength for each energy.
pub fn wavelength(energies: &[f64]) -> Result<(), AppError> {
    let mut rows = Vec::new();
    for &e in energies {
        let lam = electron_wavelength(e).map_err(|err| AppError::validation(err.to_string()))?;
        rows.push((e, lam));
    }
    println!("{:>14}  {:>14}  {:>14}", "energy_eV", "lambda_pm", "lambda_m");
    for (e, lam) in rows {
        println!("{:>14}  {:>14.6}  {:>14.6e}", e, lam * 1e12, lam);
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthesizeReport {
    config_hash: String,
    energy_ev: f64,
    wavelength_m: f64,
    doe_pixel_m: f64,
    screen_pixel_m: f64,
    focus_offset_px: [i64; 2],
    element_kind: String,
    open_fraction: f64,
    specimen_transmission: f64,
    element_transmission_right: f64,
    element_transmission_wrong: f64,
    detect_prob_right: f64,
    detect_prob_wrong: f64,
    spot_window_radius_px: usize,
    window_area_fraction: f64,
    spot_mass_right: f64,
    spot_mass_wrong: f64,
    /// Window mass over window area fraction: the focal gain.
    spot_gain_right: f64,
    spot_gain_wrong: f64,
    files: Vec<String>,
    config_toml: String,
}

/// `synthesize`: write element images, the hole list, and a focal-gain
/// report for the Right-hypothesis element.
pub fn synthesize(cfg: &ResolvedConfig, out: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(out).map_err(AppError::io)?;
    let chain = build_chain(cfg)?;
    let right = chain.distribution(cfg, Orientation::Right)?;
    let wrong = chain.distribution(cfg, Orientation::Wrong)?;

    let radius = cfg.raw.stats.spot_window_radius_px;
    let m_r = right.window_mass(chain.focus_px, radius);
    let m_w = wrong.window_mass(chain.focus_px, radius);
    let area = right.window_area_fraction(radius);

    let files = vec![
        "element_continuous.pgm".to_string(),
        "element_binary.pbm".to_string(),
        "element_holes.csv".to_string(),
        "screen_right.pgm".to_string(),
        "screen_wrong.pgm".to_string(),
    ];
    let hash = cfg.hash();
    let stamp = format!("config_hash={hash}");
    let comments: &[&str] = &[stamp.as_str()];
    core_io::write_pgm16(
        &out.join("element_continuous.pgm"),
        chain.element_continuous.transmission(),
        comments,
    )
    .map_err(AppError::compute)?;
    core_io::write_pbm(&out.join("element_binary.pbm"), &chain.element_binary, comments)
        .map_err(AppError::compute)?;
    core_io::write_hole_csv(&out.join("element_holes.csv"), &chain.element_binary, comments)
        .map_err(AppError::compute)?;
    core_io::write_pgm16(&out.join("screen_right.pgm"), right.intensity(), comments)
        .map_err(AppError::compute)?;
    core_io::write_pgm16(&out.join("screen_wrong.pgm"), wrong.intensity(), comments)
        .map_err(AppError::compute)?;

    let report = SynthesizeReport {
        config_hash: hash,
        energy_ev: cfg.raw.beam.energy_ev,
        wavelength_m: cfg.wavelength,
        doe_pixel_m: chain.element.pixel_size(),
        screen_pixel_m: chain.screen_pixel,
        focus_offset_px: cfg.focus_offset_px,
        element_kind: cfg.raw.synthesis.element.clone(),
        open_fraction: chain.element.open_fraction(),
        specimen_transmission: right.channels.specimen,
        element_transmission_right: right.channels.element,
        element_transmission_wrong: wrong.channels.element,
        detect_prob_right: right.detect_prob(),
        detect_prob_wrong: wrong.detect_prob(),
        spot_window_radius_px: radius,
        window_area_fraction: area,
        spot_mass_right: m_r,
        spot_mass_wrong: m_w,
        spot_gain_right: m_r / area,
        spot_gain_wrong: m_w / area,
        files,
        config_toml: cfg.canonical_toml(),
    };
    output::write_json(&out.join("synthesize_report.json"), &report)?;
    println!(
        "element written to {}: open fraction {:.3}, focal gain right {:.1}x / wrong {:.1}x",
        out.display(),
        report.open_fraction,
        report.spot_gain_right,
        report.spot_gain_wrong
    );
    Ok(())
}

#[derive(Serialize)]
struct EnsembleSummary {
    config_hash: String,
    seed_derivation: String,
    detect_prob_right: f64,
    detect_prob_wrong: f64,
    channels_right: ChannelTransmission,
    channels_wrong: ChannelTransmission,
    /// 1 / (T_spec * T_DOE) for the Right chain: the expected
    /// incident-per-detected inflation.
    expected_incident_per_detected: f64,
    truth_right: TrialStatistics,
    truth_wrong: TrialStatistics,
    files: Vec<String>,
    config_toml: String,
}

/// Seed used for the truth=Wrong ensemble (documented derivation).
pub fn wrong_truth_seed(master_seed: u64) -> u64 {
    master_seed.wrapping_add(1)
}

/// `ensemble`: run both-truth ensembles, write statistics, traces, event
/// logs, and the plot-ready confidence curve.
pub fn ensemble(cfg: &ResolvedConfig, out: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(out).map_err(AppError::io)?;
    let chain = build_chain(cfg)?;
    let pair = chain.hypothesis_pair(cfg)?;
    let stats_cfg = &cfg.raw.stats;
    let seed = stats_cfg.master_seed;

    let (stats_right, records_right) = run_ensemble(
        Orientation::Right,
        &pair,
        stats_cfg.confidence,
        stats_cfg.n_trials,
        seed,
        stats_cfg.max_incident,
        cfg.mode,
    )
    .map_err(AppError::compute)?;
    let (stats_wrong, records_wrong) = run_ensemble(
        Orientation::Wrong,
        &pair,
        stats_cfg.confidence,
        stats_cfg.n_trials,
        wrong_truth_seed(seed),
        stats_cfg.max_incident,
        cfg.mode,
    )
    .map_err(AppError::compute)?;

    let hash = cfg.hash();
    output::write_traces_csv(&out.join("traces_right.csv"), &records_right, &hash)?;
    output::write_traces_csv(&out.join("traces_wrong.csv"), &records_wrong, &hash)?;
    output::write_events_csv(&out.join("events_right.csv"), &records_right, &hash)?;
    output::write_events_csv(&out.join("events_wrong.csv"), &records_wrong, &hash)?;
    output::write_confidence_curve_csv(
        &out.join("confidence_curve_right.csv"),
        &records_right,
        &hash,
    )?;

    let tr = pair.dist_right().channels;
    let summary = EnsembleSummary {
        config_hash: hash,
        seed_derivation: format!(
            "ChaCha8 seeded from_u64(master_seed) with stream = trial + 1; \
             truth=Right uses master_seed = {seed}, truth=Wrong uses master_seed + 1 = {}",
            wrong_truth_seed(seed)
        ),
        detect_prob_right: pair.dist_right().detect_prob(),
        detect_prob_wrong: pair.dist_wrong().detect_prob(),
        channels_right: tr,
        channels_wrong: pair.dist_wrong().channels,
        expected_incident_per_detected: 1.0 / (tr.specimen * tr.element),
        truth_right: stats_right,
        truth_wrong: stats_wrong,
        files: vec![
            "traces_right.csv".into(),
            "traces_wrong.csv".into(),
            "events_right.csv".into(),
            "events_wrong.csv".into(),
            "confidence_curve_right.csv".into(),
        ],
        config_toml: cfg.canonical_toml(),
    };
    output::write_json(&out.join("ensemble_summary.json"), &summary)?;
    println!(
        "truth=Right: detected {:.2} +- {:.2}, incident {:.2} +- {:.2}, undecided {}",
        summary.truth_right.mean_detected,
        summary.truth_right.std_detected,
        summary.truth_right.mean_incident,
        summary.truth_right.std_incident,
        summary.truth_right.n_undecided
    );
    println!(
        "truth=Wrong: accept-right rate {:.4} over {} trials",
        summary.truth_wrong.false_accept_rate, summary.truth_wrong.n_trials
    );
    Ok(())
}

#[derive(Serialize)]
struct GratingFit {
    slope_rad_per_m: f64,
    intercept_rad: f64,
    r_squared: f64,
    /// 1 / slit_spacing: the plane-wave grating-equation slope.
    expected_slope_rad_per_m: f64,
}

#[derive(Serialize)]
struct GratingReport {
    config_hash: String,
    n_gratings: usize,
    illumination: String,
    points: Vec<SweepPoint>,
    fit: Option<GratingFit>,
    files: Vec<String>,
    config_toml: String,
}

/// `grating`: run the energy sweep, write patterns, the angle table, and
/// the linearity fit.
pub fn grating(cfg: &ResolvedConfig, out: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(out).map_err(AppError::io)?;
    let energies = &cfg.raw.grating.energies_ev;
    let points = sweep_energies(&cfg.grating_spec, &cfg.projection, energies, cfg.illumination)
        .map_err(AppError::compute)?;

    let hash = cfg.hash();
    let stamp = format!("config_hash={hash}");
    let mut files = vec!["grating_sweep.csv".to_string()];
    for &e in energies {
        let dist =
            elver_core::simulate_pattern(&cfg.grating_spec, &cfg.projection, e, cfg.illumination)
                .map_err(AppError::compute)?;
        let name = format!("pattern_{e}eV.pgm");
        core_io::write_pgm16(&out.join(&name), dist.intensity(), &[stamp.as_str()])
            .map_err(AppError::compute)?;
        files.push(name);
    }

    // sweep CSV
    {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(out.join("grating_sweep.csv")).map_err(AppError::io)?,
        );
        writeln!(w, "# {stamp}").map_err(AppError::io)?;
        writeln!(w, "energy_eV,wavelength_m,angle_mrad,merged").map_err(AppError::io)?;
        for p in &points {
            writeln!(
                w,
                "{},{},{},{}",
                p.energy_ev,
                p.wavelength_m,
                p.angle_mrad.map(|a| a.to_string()).unwrap_or_default(),
                p.merged
            )
            .map_err(AppError::io)?;
        }
    }

    let resolved: Vec<&SweepPoint> = points.iter().filter(|p| !p.merged).collect();
    let fit = if resolved.len() >= 2 {
        let xs: Vec<f64> = resolved.iter().map(|p| p.wavelength_m).collect();
        let ys: Vec<f64> = resolved.iter().map(|p| p.angle_mrad.unwrap() * 1e-3).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        Some(GratingFit {
            slope_rad_per_m: a,
            intercept_rad: b,
            r_squared: r2,
            expected_slope_rad_per_m: 1.0 / cfg.grating_spec.slit_spacing,
        })
    } else {
        None
    };

    let report = GratingReport {
        config_hash: hash,
        n_gratings: cfg.grating_spec.n_gratings,
        illumination: cfg.raw.grating.illumination.clone(),
        points,
        fit,
        files,
        config_toml: cfg.canonical_toml(),
    };
    output::write_json(&out.join("grating_report.json"), &report)?;
    for p in &report.points {
        match p.angle_mrad {
            Some(a) => println!("{:>8} eV  angle {:.4} mrad", p.energy_ev, a),
            None => println!("{:>8} eV  merged first orders", p.energy_ev),
        }
    }
    if let Some(f) = &report.fit {
        println!(
            "linear fit: slope {:.4e} rad/m (grating equation {:.4e}), R^2 = {:.5}",
            f.slope_rad_per_m, f.expected_slope_rad_per_m, f.r_squared
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    artifacts_checked: usize,
    hashes_ok: bool,
    replay_ok: Option<bool>,
}

/// `verify`: recompute the config hash embedded in each JSON artifact,
/// check the hash stamped into every file the report lists, and with
/// `full` rebuild the chain and replay the event logs to confirm the
/// published statistics.
pub fn verify(out: &Path, full: bool) -> Result<(), AppError> {
    let mut checked = 0usize;
    let mut replayed = None;
    for name in [
        "synthesize_report.json",
        "ensemble_summary.json",
        "grating_report.json",
    ] {
        let path = out.join(name);
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(AppError::io)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| AppError::validation(format!("{name}: bad json: {e}")))?;
        let echoed = value
            .get("config_toml")
            .and_then(|v| v.as_str())
            .ok_or_else(|| AppError::validation(format!("{name}: missing config_toml")))?;
        let stored_hash = value
            .get("config_hash")
            .and_then(|v| v.as_str())
            .ok_or_else(|| AppError::validation(format!("{name}: missing config_hash")))?;
        let recomputed = format!("{:016x}", crate::config::fnv1a64(echoed.as_bytes()));
        if recomputed != stored_hash {
            return Err(AppError::compute_msg(format!(
                "{name}: config hash mismatch (stored {stored_hash}, recomputed {recomputed})"
            )));
        }
        // every file the report lists must carry the same hash stamp
        if let Some(files) = value.get("files").and_then(|v| v.as_array()) {
            for f in files {
                let fname = f.as_str().unwrap_or_default();
                let embedded = embedded_hash(&out.join(fname))?;
                if embedded != stored_hash {
                    return Err(AppError::compute_msg(format!(
                        "{fname}: embedded hash {embedded} does not match {stored_hash}"
                    )));
                }
                checked += 1;
            }
        }
        checked += 1;
        println!("{name}: config hash ok ({stored_hash})");

        if full && name == "ensemble_summary.json" {
            replayed = Some(replay_ensemble(out, &value, echoed)?);
        }
    }
    if checked == 0 {
        return Err(AppError::validation(format!(
            "no report artifacts found under {}",
            out.display()
        )));
    }
    let report = VerifyReport { artifacts_checked: checked, hashes_ok: true, replay_ok: replayed };
    println!(
        "verified {} artifact(s){}",
        report.artifacts_checked,
        match report.replay_ok {
            Some(true) => "; event-log replay reproduced the statistics",
            Some(false) => "; event-log replay FAILED",
            None => "",
        }
    );
    Ok(())
}

/// Pull the `config_hash=` stamp out of a PGM/PBM header comment or a
/// leading CSV comment line.
fn embedded_hash(path: &Path) -> Result<String, AppError> {
    let bytes = std::fs::read(path).map_err(AppError::io)?;
    let head = &bytes[..bytes.len().min(4096)];
    let text = String::from_utf8_lossy(head);
    for line in text.lines().take(8) {
        let line = line.trim_start_matches('#').trim();
        if let Some(h) = line.strip_prefix("config_hash=") {
            return Ok(h.trim().to_string());
        }
    }
    Err(AppError::compute_msg(format!(
        "{}: no embedded config hash found",
        path.display()
    )))
}

/// Rebuild the chain from the echoed config and replay the event logs;
/// the recomputed statistics must match the published ones.
fn replay_ensemble(
    out: &Path,
    summary: &serde_json::Value,
    echoed_toml: &str,
) -> Result<bool, AppError> {
    let cfg: crate::config::ExperimentConfig = toml::from_str(echoed_toml)
        .map_err(|e| AppError::validation(format!("echoed config: {e}")))?;
    let cfg = cfg.resolve()?;
    let chain = build_chain(&cfg)?;
    let pair = chain.hypothesis_pair(&cfg)?;

    for (events_file, truth_key, truth) in [
        ("events_right.csv", "truth_right", Orientation::Right),
        ("events_wrong.csv", "truth_wrong", Orientation::Wrong),
    ] {
        let trials = output::read_events_csv(&out.join(events_file))?;
        let records: Vec<elver_core::TrialRecord> = trials
            .iter()
            .map(|(trial, events)| {
                let (trace, verdict) =
                    replay_trial(&pair, cfg.raw.stats.confidence, cfg.mode, events)
                        .map_err(AppError::compute)?;
                Ok(elver_core::TrialRecord {
                    trial: *trial,
                    rng_stream: trial + 1,
                    verdict,
                    trace,
                })
            })
            .collect::<Result<_, AppError>>()?;
        let recomputed = elver_core::hypothesis::summarize(
            truth,
            cfg.mode,
            cfg.raw.stats.confidence,
            &records,
        );
        let published = summary
            .get(truth_key)
            .ok_or_else(|| AppError::validation(format!("summary missing {truth_key}")))?;
        let check = |field: &str, got: f64| -> Result<(), AppError> {
            let want = published.get(field).and_then(|v| v.as_f64()).ok_or_else(|| {
                AppError::validation(format!("summary {truth_key}.{field} missing"))
            })?;
            if (got - want).abs() > 1e-9 * want.abs().max(1.0) {
                return Err(AppError::compute_msg(format!(
                    "{truth_key}.{field}: replay got {got}, summary says {want}"
                )));
            }
            Ok(())
        };
        check("mean_detected", recomputed.mean_detected)?;
        check("std_detected", recomputed.std_detected)?;
        check("mean_incident", recomputed.mean_incident)?;
        check("false_accept_rate", recomputed.false_accept_rate)?;
        let undecided = published
            .get("n_undecided")
            .and_then(|v| v.as_u64())
            .unwrap_or(u64::MAX);
        if undecided != recomputed.n_undecided {
            return Err(AppError::compute_msg(format!(
                "{truth_key}.n_undecided: replay got {}, summary says {undecided}",
                recomputed.n_undecided
            )));
        }
        // verdicts must replay exactly
        for r in &records {
            if matches!(r.verdict, Verdict::Undecided)
                && r.trace.events.len() < cfg.raw.stats.max_incident as usize
            {
                return Err(AppError::compute_msg(format!(
                    "trial {}: undecided but event log is short",
                    r.trial
                )));
            }
        }
    }
    Ok(true)
}
