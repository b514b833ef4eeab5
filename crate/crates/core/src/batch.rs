//! Batches of independent trials and their summary statistics.

use std::io::Write;

use rayon::prelude::*;

use crate::rng::split_seed;
use crate::scenario::Scenario;
use crate::sim::{run_trial, Outcome, SimError, TrialResult};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean tick of detection over all detected targets; `None` if none were.
    pub mean_detection_ticks: Option<f64>,
    pub timeouts: usize,
}

impl BatchStats {
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let n = trials.len();
        let successes = trials.iter().filter(|t| t.outcome == Outcome::Win).count();
        let (ci_low, ci_high) = wilson_interval(successes, n, Z95);
        let ticks: Vec<u64> = trials
            .iter()
            .flat_map(|t| t.detections.iter().flatten().copied())
            .collect();
        Self {
            trials: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            ci_low,
            ci_high,
            mean_detection_ticks: (!ticks.is_empty())
                .then(|| ticks.iter().sum::<u64>() as f64 / ticks.len() as f64),
            timeouts: trials.iter().filter(|t| t.timeout).count(),
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub trials: Vec<TrialResult>,
    pub stats: BatchStats,
}

/// Runs `n_trials` trials on `jobs` worker threads; trial `i` uses seed
/// `split_seed(master_seed, i)`. Results are in trial order regardless of
/// `jobs`.
pub fn run_batch(
    scn: &Scenario,
    n_trials: usize,
    master_seed: u64,
    jobs: usize,
) -> Result<BatchResult, SimError> {
    let run = || {
        (0..n_trials)
            .into_par_iter()
            .map(|i| run_trial(scn, split_seed(master_seed, i as u64)))
            .collect::<Result<Vec<_>, _>>()
    };
    let trials = with_jobs(jobs, run)?;
    let stats = BatchStats::from_trials(&trials);
    Ok(BatchResult { trials, stats })
}

/// Runs `f` inside a rayon pool of `jobs` threads (`0` = rayon default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
        .install(f)
}

/// `trial,seed,outcome,ticks,losing_target,timeout,det_0,...,det_{n-1}`;
/// empty fields stand for "none".
pub fn write_trials_csv(out: impl Write, trials: &[TrialResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = trials.iter().map(|t| t.detections.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["trial", "seed", "outcome", "ticks", "losing_target", "timeout"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n).map(|j| format!("det_{j}")));
    w.write_record(&header)?;
    for (i, t) in trials.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            t.seed.to_string(),
            t.outcome.as_str().to_string(),
            t.ticks.to_string(),
            t.losing_target.map(|x| x.to_string()).unwrap_or_default(),
            t.timeout.to_string(),
        ];
        row.extend((0..n).map(|j| {
            t.detections
                .get(j)
                .copied()
                .flatten()
                .map(|x| x.to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const STATS_COLUMNS: [&str; 6] = [
    "success_rate",
    "ci_low",
    "ci_high",
    "trials",
    "mean_detection_ticks",
    "timeouts",
];

/// Values in [`STATS_COLUMNS`] order.
pub fn stats_fields(s: &BatchStats) -> Vec<String> {
    vec![
        format!("{:.6}", s.success_rate),
        format!("{:.6}", s.ci_low),
        format!("{:.6}", s.ci_high),
        s.trials.to_string(),
        s.mean_detection_ticks
            .map(|m| format!("{m:.3}"))
            .unwrap_or_default(),
        s.timeouts.to_string(),
    ]
}
