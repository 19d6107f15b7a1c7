//! Sequential Bayesian confidence tracking per detected electron, the
//! symmetric stopping rule, and ensemble dose statistics.
//!
//! Each detected electron at screen pixel `x` multiplies the posterior
//! odds by the likelihood ratio `pmf_right(x) / pmf_wrong(x)`, with both
//! pmfs floored at a small constant so that a single electron can never
//! force the posterior to exactly 0 or 1. Absorbed electrons either leave
//! the posterior unchanged (`DetectionsOnly`) or update through the
//! absorption channel (`FullInformation`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detection::{sample_event, DetectionEvent, ScreenDistribution};
use crate::error::{CoreError, Result};
use crate::specimen::Orientation;

/// Floor applied to pmf values before forming likelihood ratios, as a
/// multiple of the uniform per-pixel probability.
pub const LIKELIHOOD_FLOOR_OF_UNIFORM: f64 = 1e-3;

/// Floor for absorption-channel probabilities in full-information mode.
const ABSORPTION_FLOOR: f64 = 1e-12;

/// How absorbed electrons enter the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum UpdateMode {
    /// Only detected electrons update the posterior; absorbed electrons
    /// are counted toward incident dose but carry no information.
    DetectionsOnly,
    /// Absorbed electrons update through the ratio of absorption
    /// probabilities `(1 - T_right) / (1 - T_wrong)`.
    FullInformation,
}

/// The two candidate screen distributions, both computed through the SAME
/// element (synthesized for `Right`).
pub struct HypothesisPair {
    dist_right: ScreenDistribution,
    dist_wrong: ScreenDistribution,
    prior_right: f64,
    /// Per-pixel log likelihood ratios (floored), flattened row-major.
    log_ratio: Vec<f64>,
    /// Log ratio applied on absorption in full-information mode.
    log_ratio_absorbed: f64,
}

impl HypothesisPair {
    pub fn new(
        dist_right: ScreenDistribution,
        dist_wrong: ScreenDistribution,
        prior_right: f64,
    ) -> Result<Self> {
        if dist_right.dims() != dist_wrong.dims() {
            return Err(CoreError::Shape(
                "hypothesis distributions must share grid dimensions".into(),
            ));
        }
        let rel = (dist_right.pixel_size() - dist_wrong.pixel_size()).abs()
            / dist_right.pixel_size();
        if rel > 1e-9 {
            return Err(CoreError::Shape(
                "hypothesis distributions must share pixel size".into(),
            ));
        }
        if !(prior_right > 0.0 && prior_right < 1.0) {
            return Err(CoreError::Domain(format!(
                "prior must lie strictly inside (0,1), got {prior_right}"
            )));
        }
        let n_pixels = dist_right.pmf().len();
        let floor = LIKELIHOOD_FLOOR_OF_UNIFORM / n_pixels as f64;
        let log_ratio = dist_right
            .pmf()
            .iter()
            .zip(dist_wrong.pmf().iter())
            .map(|(&r, &w)| (r.max(floor) / w.max(floor)).ln())
            .collect();
        let miss_right = (1.0 - dist_right.detect_prob()).max(ABSORPTION_FLOOR);
        let miss_wrong = (1.0 - dist_wrong.detect_prob()).max(ABSORPTION_FLOOR);
        let log_ratio_absorbed = (miss_right / miss_wrong).ln();
        Ok(Self { dist_right, dist_wrong, prior_right, log_ratio, log_ratio_absorbed })
    }

    pub fn dist_right(&self) -> &ScreenDistribution {
        &self.dist_right
    }

    pub fn dist_wrong(&self) -> &ScreenDistribution {
        &self.dist_wrong
    }

    pub fn prior_right(&self) -> f64 {
        self.prior_right
    }

    pub fn truth_distribution(&self, truth: Orientation) -> &ScreenDistribution {
        match truth {
            Orientation::Right => &self.dist_right,
            Orientation::Wrong => &self.dist_wrong,
        }
    }

    /// Log likelihood ratio contributed by one event.
    pub fn event_log_ratio(&self, event: &DetectionEvent, mode: UpdateMode) -> Result<f64> {
        match *event {
            DetectionEvent::Detected { y, x } => {
                let (ny, nx) = self.dist_right.dims();
                if y >= ny || x >= nx {
                    return Err(CoreError::Shape(format!(
                        "event pixel ({y}, {x}) outside {nx}x{ny} screen"
                    )));
                }
                Ok(self.log_ratio[y * nx + x])
            }
            DetectionEvent::Absorbed => Ok(match mode {
                UpdateMode::DetectionsOnly => 0.0,
                UpdateMode::FullInformation => self.log_ratio_absorbed,
            }),
        }
    }

    /// Linear likelihood ratio contributed by one event (floored pmfs).
    pub fn event_likelihood_ratio(&self, event: &DetectionEvent, mode: UpdateMode) -> Result<f64> {
        match *event {
            DetectionEvent::Detected { y, x } => {
                let (ny, nx) = self.dist_right.dims();
                if y >= ny || x >= nx {
                    return Err(CoreError::Shape(format!(
                        "event pixel ({y}, {x}) outside {nx}x{ny} screen"
                    )));
                }
                let floor = LIKELIHOOD_FLOOR_OF_UNIFORM / self.log_ratio.len() as f64;
                let r = self.dist_right.pmf()[[y, x]].max(floor);
                let w = self.dist_wrong.pmf()[[y, x]].max(floor);
                Ok(r / w)
            }
            DetectionEvent::Absorbed => Ok(match mode {
                UpdateMode::DetectionsOnly => 1.0,
                UpdateMode::FullInformation => {
                    let miss_right = (1.0 - self.dist_right.detect_prob()).max(ABSORPTION_FLOOR);
                    let miss_wrong = (1.0 - self.dist_wrong.detect_prob()).max(ABSORPTION_FLOOR);
                    miss_right / miss_wrong
                }
            }),
        }
    }
}

/// One Bayesian update: posterior odds = prior odds x likelihood ratio.
pub fn update_posterior(
    prior: f64,
    event: &DetectionEvent,
    pair: &HypothesisPair,
    mode: UpdateMode,
) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(CoreError::Domain(format!(
            "prior must lie strictly inside (0,1), got {prior}"
        )));
    }
    let odds = prior / (1.0 - prior) * pair.event_likelihood_ratio(event, mode)?;
    Ok(odds / (1.0 + odds))
}

fn logistic(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        let e = (-log_odds).exp();
        1.0 / (1.0 + e)
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// What a trial concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Verdict {
    AcceptRight,
    AcceptWrong,
    Undecided,
}

/// One point on the per-electron confidence curve.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TraceStep {
    pub electrons_detected: u64,
    pub electrons_incident: u64,
    pub posterior_right: f64,
}

/// The confidence curve of a single trial, one entry per incident electron.
#[derive(Debug, Clone)]
pub struct PosteriorTrace {
    pub steps: Vec<TraceStep>,
    /// Events in incident order, for replay and audit.
    pub events: Vec<DetectionEvent>,
    /// Stream id of the generator that produced this trial.
    pub rng_stream: u64,
}

/// Run one trial: draw events from the TRUTH distribution and update until
/// a confidence boundary is crossed or the incident budget runs out.
pub fn run_trial(
    truth: Orientation,
    pair: &HypothesisPair,
    confidence: f64,
    max_incident: u64,
    rng: &mut ChaCha8Rng,
    mode: UpdateMode,
) -> Result<(PosteriorTrace, Verdict)> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(CoreError::Domain(format!(
            "confidence must lie in (0.5, 1), got {confidence}"
        )));
    }
    if max_incident == 0 {
        return Err(CoreError::Domain("max_incident must be positive".into()));
    }
    let dist = pair.truth_distribution(truth);
    let threshold = (confidence / (1.0 - confidence)).ln();
    let prior = pair.prior_right();
    let mut log_odds = (prior / (1.0 - prior)).ln();
    let mut detected = 0u64;
    let mut steps = Vec::new();
    let mut events = Vec::new();
    let mut verdict = Verdict::Undecided;

    for incident in 1..=max_incident {
        let event = sample_event(dist, rng);
        if matches!(event, DetectionEvent::Detected { .. }) {
            detected += 1;
        }
        log_odds += pair.event_log_ratio(&event, mode)?;
        events.push(event);
        steps.push(TraceStep {
            electrons_detected: detected,
            electrons_incident: incident,
            posterior_right: logistic(log_odds),
        });
        if log_odds >= threshold {
            verdict = Verdict::AcceptRight;
            break;
        }
        if log_odds <= -threshold {
            verdict = Verdict::AcceptWrong;
            break;
        }
    }
    Ok((
        PosteriorTrace { steps, events, rng_stream: 0 },
        verdict,
    ))
}

/// Re-run the Bayesian updates over a recorded event sequence (e.g. from
/// an emitted event log). Produces the same trace and verdict as the
/// trial that generated the events.
pub fn replay_trial(
    pair: &HypothesisPair,
    confidence: f64,
    mode: UpdateMode,
    events: &[DetectionEvent],
) -> Result<(PosteriorTrace, Verdict)> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(CoreError::Domain(format!(
            "confidence must lie in (0.5, 1), got {confidence}"
        )));
    }
    let threshold = (confidence / (1.0 - confidence)).ln();
    let prior = pair.prior_right();
    let mut log_odds = (prior / (1.0 - prior)).ln();
    let mut detected = 0u64;
    let mut steps = Vec::with_capacity(events.len());
    let mut verdict = Verdict::Undecided;
    for (i, event) in events.iter().enumerate() {
        if matches!(event, DetectionEvent::Detected { .. }) {
            detected += 1;
        }
        log_odds += pair.event_log_ratio(event, mode)?;
        steps.push(TraceStep {
            electrons_detected: detected,
            electrons_incident: (i + 1) as u64,
            posterior_right: logistic(log_odds),
        });
        if log_odds >= threshold {
            verdict = Verdict::AcceptRight;
            break;
        }
        if log_odds <= -threshold {
            verdict = Verdict::AcceptWrong;
            break;
        }
    }
    Ok((
        PosteriorTrace { steps, events: events.to_vec(), rng_stream: 0 },
        verdict,
    ))
}

/// Ensemble dose statistics over decided trials.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrialStatistics {
    pub truth: Orientation,
    pub mode: UpdateMode,
    pub confidence: f64,
    pub n_trials: u64,
    pub n_accept_right: u64,
    pub n_accept_wrong: u64,
    pub n_undecided: u64,
    /// Mean/std of detected electrons at decision, over decided trials.
    pub mean_detected: f64,
    pub std_detected: f64,
    /// Mean/std of incident electrons at decision, over decided trials.
    pub mean_incident: f64,
    pub std_incident: f64,
    /// Rate of accepting the hypothesis that is false, over all trials.
    pub false_accept_rate: f64,
    /// Rate of rejecting the hypothesis that is true, over all trials.
    pub false_reject_rate: f64,
    pub undecided_rate: f64,
}

/// Per-trial record kept alongside the statistics.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: u64,
    pub rng_stream: u64,
    pub verdict: Verdict,
    pub trace: PosteriorTrace,
}

/// Derive the generator for one trial: the master seed keyed by the trial
/// index as the ChaCha stream number.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial.wrapping_add(1));
    rng
}

/// Run `n_trials` independent seeded trials (in parallel) and aggregate.
///
/// Results are independent of scheduling order: each trial owns a private
/// generator stream and aggregation runs in trial order.
pub fn run_ensemble(
    truth: Orientation,
    pair: &HypothesisPair,
    confidence: f64,
    n_trials: u64,
    master_seed: u64,
    max_incident: u64,
    mode: UpdateMode,
) -> Result<(TrialStatistics, Vec<TrialRecord>)> {
    if n_trials == 0 {
        return Err(CoreError::Domain("n_trials must be >= 1".into()));
    }
    let mut records: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(master_seed, trial);
            let (mut trace, verdict) =
                run_trial(truth, pair, confidence, max_incident, &mut rng, mode)?;
            trace.rng_stream = trial.wrapping_add(1);
            Ok(TrialRecord { trial, rng_stream: trial.wrapping_add(1), verdict, trace })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.trial);

    Ok((summarize(truth, mode, confidence, &records), records))
}

/// Compute ensemble statistics from per-trial records (also used to
/// re-derive statistics from emitted event logs).
pub fn summarize(
    truth: Orientation,
    mode: UpdateMode,
    confidence: f64,
    records: &[TrialRecord],
) -> TrialStatistics {
    let n_trials = records.len() as u64;
    let mut n_right = 0u64;
    let mut n_wrong = 0u64;
    let mut detected = Vec::new();
    let mut incident = Vec::new();
    for r in records {
        match r.verdict {
            Verdict::AcceptRight => n_right += 1,
            Verdict::AcceptWrong => n_wrong += 1,
            Verdict::Undecided => continue,
        }
        let last = r.trace.steps.last().expect("decided trial has steps");
        detected.push(last.electrons_detected as f64);
        incident.push(last.electrons_incident as f64);
    }
    let n_undecided = n_trials - n_right - n_wrong;
    let (mean_d, std_d) = mean_std(&detected);
    let (mean_i, std_i) = mean_std(&incident);
    let errors = match truth {
        Orientation::Right => n_wrong,
        Orientation::Wrong => n_right,
    };
    TrialStatistics {
        truth,
        mode,
        confidence,
        n_trials,
        n_accept_right: n_right,
        n_accept_wrong: n_wrong,
        n_undecided,
        mean_detected: mean_d,
        std_detected: std_d,
        mean_incident: mean_i,
        std_incident: std_i,
        false_accept_rate: errors as f64 / n_trials as f64,
        false_reject_rate: errors as f64 / n_trials as f64,
        undecided_rate: n_undecided as f64 / n_trials as f64,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::ChannelTransmission;
    use ndarray::Array2;

    fn dist_from_pmf(pmf: Array2<f64>, t: f64) -> ScreenDistribution {
        let total: f64 = pmf.iter().sum();
        ScreenDistribution::new(
            pmf,
            1e-4,
            total / t,
            ChannelTransmission { specimen: t, element: 1.0 },
        )
        .unwrap()
    }

    fn uniform_pair(n: usize, t: f64) -> HypothesisPair {
        let pmf = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        HypothesisPair::new(dist_from_pmf(pmf.clone(), t), dist_from_pmf(pmf, t), 0.5).unwrap()
    }

    #[test]
    fn uninformative_event_keeps_prior() {
        let pair = uniform_pair(8, 1.0);
        let post = update_posterior(
            0.37,
            &DetectionEvent::Detected { y: 2, x: 5 },
            &pair,
            UpdateMode::DetectionsOnly,
        )
        .unwrap();
        assert!((post - 0.37).abs() < 1e-15);
    }

    #[test]
    fn ratio_19_from_even_prior_gives_095_exactly() {
        // Right: 19/256 at one pixel plus 237 pixels of 1/256 (sums exactly
        // to 1 in floating point); Wrong: uniform 1/256. The [0,0] ratio is
        // exactly 19.0, so the odds arithmetic must give exactly 19/20.
        let n = 16;
        let mut right = Array2::zeros((n, n));
        right[[0, 0]] = 19.0 / 256.0;
        let mut placed = 0;
        'fill: for iy in 0..n {
            for ix in 0..n {
                if (iy, ix) == (0, 0) {
                    continue;
                }
                right[[iy, ix]] = 1.0 / 256.0;
                placed += 1;
                if placed == 237 {
                    break 'fill;
                }
            }
        }
        let total: f64 = right.iter().sum();
        assert_eq!(total, 1.0, "dyadic construction must sum exactly to 1");
        let wrong = Array2::from_elem((n, n), 1.0 / 256.0);
        let pair = HypothesisPair::new(
            dist_from_pmf(right, 1.0),
            dist_from_pmf(wrong, 1.0),
            0.5,
        )
        .unwrap();
        let post = update_posterior(
            0.5,
            &DetectionEvent::Detected { y: 0, x: 0 },
            &pair,
            UpdateMode::DetectionsOnly,
        )
        .unwrap();
        assert_eq!(post, 0.95);
    }

    #[test]
    fn event_order_does_not_matter() {
        let n = 8;
        let mut right = Array2::from_elem((n, n), 1.0);
        right[[1, 1]] = 5.0;
        right[[2, 3]] = 0.25;
        let rt: f64 = right.iter().sum();
        let right = right.mapv(|v| v / rt);
        let wrong = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        let pair =
            HypothesisPair::new(dist_from_pmf(right, 1.0), dist_from_pmf(wrong, 1.0), 0.5).unwrap();
        let e1 = DetectionEvent::Detected { y: 1, x: 1 };
        let e2 = DetectionEvent::Detected { y: 2, x: 3 };
        let mode = UpdateMode::DetectionsOnly;
        let p12 = update_posterior(
            update_posterior(0.5, &e1, &pair, mode).unwrap(),
            &e2,
            &pair,
            mode,
        )
        .unwrap();
        let p21 = update_posterior(
            update_posterior(0.5, &e2, &pair, mode).unwrap(),
            &e1,
            &pair,
            mode,
        )
        .unwrap();
        assert!((p12 - p21).abs() < 1e-14);
    }

    #[test]
    fn identical_distributions_stay_undecided() {
        let pair = uniform_pair(8, 1.0);
        let mut rng = trial_rng(5, 0);
        let (trace, verdict) =
            run_trial(Orientation::Right, &pair, 0.95, 500, &mut rng, UpdateMode::DetectionsOnly)
                .unwrap();
        assert_eq!(verdict, Verdict::Undecided);
        assert_eq!(trace.steps.len(), 500);
        for s in &trace.steps {
            assert!((s.posterior_right - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_vs_uniform_decides_on_first_detection() {
        let n = 16;
        let mut right = Array2::zeros((n, n));
        right[[8, 8]] = 1.0;
        let wrong = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        let pair =
            HypothesisPair::new(dist_from_pmf(right, 1.0), dist_from_pmf(wrong, 1.0), 0.5).unwrap();
        // single-pixel ratio: 1.0 / (1/256) = 256 >= 19
        let mut rng = trial_rng(9, 0);
        let (trace, verdict) =
            run_trial(Orientation::Right, &pair, 0.95, 1000, &mut rng, UpdateMode::DetectionsOnly)
                .unwrap();
        assert_eq!(verdict, Verdict::AcceptRight);
        assert_eq!(trace.steps.last().unwrap().electrons_detected, 1);
    }

    #[test]
    fn single_trial_ensemble_has_zero_std() {
        let n = 16;
        let mut right = Array2::zeros((n, n));
        right[[8, 8]] = 1.0;
        let wrong = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        let pair =
            HypothesisPair::new(dist_from_pmf(right, 1.0), dist_from_pmf(wrong, 1.0), 0.5).unwrap();
        let (stats, _) = run_ensemble(
            Orientation::Right,
            &pair,
            0.95,
            1,
            3,
            1000,
            UpdateMode::DetectionsOnly,
        )
        .unwrap();
        assert_eq!(stats.n_trials, 1);
        assert_eq!(stats.std_detected, 0.0);
        assert_eq!(stats.std_incident, 0.0);
    }

    #[test]
    fn ensemble_reproducible_and_order_independent() {
        let n = 16;
        let mut right = Array2::from_elem((n, n), 1.0);
        right[[3, 3]] = 50.0;
        let rt: f64 = right.iter().sum();
        let right = right.mapv(|v| v / rt);
        let wrong = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        let pair =
            HypothesisPair::new(dist_from_pmf(right, 0.7), dist_from_pmf(wrong, 0.7), 0.5).unwrap();
        let run = || {
            run_ensemble(
                Orientation::Right,
                &pair,
                0.95,
                64,
                42,
                10_000,
                UpdateMode::DetectionsOnly,
            )
            .unwrap()
        };
        let (s1, r1) = run();
        let (s2, r2) = run();
        assert_eq!(s1.mean_detected.to_bits(), s2.mean_detected.to_bits());
        assert_eq!(s1.mean_incident.to_bits(), s2.mean_incident.to_bits());
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert_eq!(a.trace.events, b.trace.events);
        }
    }

    #[test]
    fn full_information_uses_absorption_channel() {
        // identical pmfs but different detection probabilities: only the
        // absorption channel discriminates
        let n = 8;
        let pmf = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
        let pair = HypothesisPair::new(
            dist_from_pmf(pmf.clone(), 0.9),
            dist_from_pmf(pmf, 0.5),
            0.5,
        )
        .unwrap();
        let absorbed = DetectionEvent::Absorbed;
        let unchanged =
            update_posterior(0.5, &absorbed, &pair, UpdateMode::DetectionsOnly).unwrap();
        assert!((unchanged - 0.5).abs() < 1e-15);
        let updated =
            update_posterior(0.5, &absorbed, &pair, UpdateMode::FullInformation).unwrap();
        // (1-0.9)/(1-0.5) = 0.2 -> posterior 0.2/1.2
        assert!((updated - 0.2 / 1.2).abs() < 1e-12);
    }
}
