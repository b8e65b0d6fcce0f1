//! Learning curves and transfer utilities (time to threshold, jumpstart,
//! transfer ratio) with interquartile-mean aggregation and bootstrap CIs.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD_POINTS: usize = 51;
pub const TTT_CAP: f64 = 100.0;
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history progress is not strictly increasing at point {0}")]
    NonMonotoneProgress(usize),
    #[error("histories use different evaluation grids")]
    GridMismatch,
    #[error("no values to aggregate")]
    NoValues,
    #[error("bad history csv at line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub progress_percent: f64,
    pub env_steps: u64,
    pub mean_return: f64,
}

/// Evaluated greedy returns over the course of one training phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub points: Vec<HistoryPoint>,
}

impl TrainingHistory {
    /// History on an evenly spaced progress grid from bare returns.
    pub fn from_returns(returns: &[f64]) -> Self {
        let last = returns.len().saturating_sub(1).max(1) as f64;
        Self {
            points: returns
                .iter()
                .enumerate()
                .map(|(i, &r)| HistoryPoint {
                    progress_percent: 100.0 * i as f64 / last,
                    env_steps: i as u64,
                    mean_return: r,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }

    pub fn progress(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.progress_percent).collect()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.points.is_empty() {
            return Err(EvalError::EmptyHistory);
        }
        for i in 1..self.points.len() {
            if self.points[i].progress_percent <= self.points[i - 1].progress_percent {
                return Err(EvalError::NonMonotoneProgress(i));
            }
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &TrainingHistory) -> bool {
        self.progress() == other.progress()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("progress_percent,env_steps,mean_return\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.progress_percent, p.env_steps, p.mean_return);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "progress_percent,env_steps,mean_return" => {}
            _ => {
                return Err(EvalError::Csv {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: &str| EvalError::Csv {
                line: i + 1,
                message: message.into(),
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected 3 fields"));
            }
            points.push(HistoryPoint {
                progress_percent: fields[0].parse().map_err(|_| err("bad progress"))?,
                env_steps: fields[1].parse().map_err(|_| err("bad step count"))?,
                mean_return: fields[2].parse().map_err(|_| err("bad return"))?,
            });
        }
        let h = Self { points };
        h.validate()?;
        Ok(h)
    }
}

/// `n` evenly spaced thresholds covering `[0, 1]`.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Earliest progress at which the return reaches `theta`; the cap if never.
pub fn ttt(h: &TrainingHistory, theta: f64) -> f64 {
    h.points
        .iter()
        .find(|p| p.mean_return >= theta)
        .map_or(TTT_CAP, |p| p.progress_percent)
}

pub fn ttt_curve(h: &TrainingHistory, thresholds: &[f64]) -> Vec<f64> {
    thresholds.iter().map(|&t| ttt(h, t)).collect()
}

/// Mean time to threshold over `thresholds`.
pub fn ttt_auc(h: &TrainingHistory, thresholds: &[f64]) -> f64 {
    mean(&ttt_curve(h, thresholds))
}

/// Jumpstart: the return before any target-side training.
pub fn js(h: &TrainingHistory) -> f64 {
    h.points.first().map_or(0.0, |p| p.mean_return)
}

/// Area under a learning curve, as the mean of the recorded returns.
pub fn auc(h: &TrainingHistory) -> f64 {
    mean(&h.returns())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferRatio {
    Finite(f64),
    /// The from-scratch baseline's area is zero.
    Infinite,
}

impl TransferRatio {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Self::Infinite
    }
}

pub fn tr(transferred: &TrainingHistory, target: &TrainingHistory) -> TransferRatio {
    let base = auc(target);
    if base == 0.0 {
        TransferRatio::Infinite
    } else {
        TransferRatio::Finite((auc(transferred) - base) / base)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Interquartile mean: drops `floor(n/4)` values from each end of the sorted
/// input and averages the rest.
pub fn iqm(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoValues);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    Ok(mean(&sorted[cut..sorted.len() - cut]))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of the IQM under resampling with replacement inside
/// each stratum; resampled strata are pooled before taking the IQM.
pub fn stratified_bootstrap_ci<R: Rng + ?Sized>(
    strata: &[Vec<f64>],
    n_resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64), EvalError> {
    if strata.iter().all(Vec::is_empty) || n_resamples == 0 {
        return Err(EvalError::NoValues);
    }
    let total: usize = strata.iter().map(Vec::len).sum();
    let mut stats = Vec::with_capacity(n_resamples);
    let mut pooled = Vec::with_capacity(total);
    for _ in 0..n_resamples {
        pooled.clear();
        for s in strata.iter().filter(|s| !s.is_empty()) {
            pooled.extend((0..s.len()).map(|_| s[rng.gen_range(0..s.len())]));
        }
        stats.push(iqm(&pooled)?);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub iqm: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of<R: Rng + ?Sized>(values: &[f64], n_resamples: usize, level: f64, rng: &mut R) -> Result<Self, EvalError> {
        let (ci_low, ci_high) = stratified_bootstrap_ci(&[values.to_vec()], n_resamples, level, rng)?;
        Ok(Self {
            iqm: iqm(values)?,
            std: std_dev(values),
            ci_low,
            ci_high,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedUtilities {
    pub seed: u64,
    pub ttt_curve: Vec<f64>,
    pub ttt_auc: f64,
    pub js: f64,
    pub tr: TransferRatio,
}

pub fn seed_utilities(
    seed: u64,
    transferred: &TrainingHistory,
    target: &TrainingHistory,
    thresholds: &[f64],
) -> Result<SeedUtilities, EvalError> {
    transferred.validate()?;
    target.validate()?;
    if !transferred.same_grid(target) {
        return Err(EvalError::GridMismatch);
    }
    let ttt_curve = ttt_curve(transferred, thresholds);
    Ok(SeedUtilities {
        seed,
        ttt_auc: mean(&ttt_curve),
        ttt_curve,
        js: js(transferred),
        tr: tr(transferred, target),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub theta: f64,
    pub ttt_iqm: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregated transfer utilities of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub thresholds: Vec<f64>,
    pub seeds: Vec<SeedUtilities>,
    pub ttt_auc: Aggregate,
    pub js: Aggregate,
    /// Aggregate over the seeds with a finite ratio; `None` if there are none.
    pub tr: Option<Aggregate>,
    pub tr_infinite_seeds: usize,
    pub threshold_curve: Vec<ThresholdPoint>,
}

impl UtilityReport {
    pub fn build<R: Rng + ?Sized>(
        seeds: Vec<SeedUtilities>,
        thresholds: &[f64],
        n_resamples: usize,
        level: f64,
        rng: &mut R,
    ) -> Result<Self, EvalError> {
        if seeds.is_empty() {
            return Err(EvalError::NoValues);
        }
        if seeds.iter().any(|s| s.ttt_curve.len() != thresholds.len()) {
            return Err(EvalError::GridMismatch);
        }
        let aucs: Vec<f64> = seeds.iter().map(|s| s.ttt_auc).collect();
        let jss: Vec<f64> = seeds.iter().map(|s| s.js).collect();
        let trs: Vec<f64> = seeds.iter().filter_map(|s| s.tr.finite()).collect();
        let ttt_auc = Aggregate::of(&aucs, n_resamples, level, rng)?;
        let js = Aggregate::of(&jss, n_resamples, level, rng)?;
        let tr = if trs.is_empty() {
            None
        } else {
            Some(Aggregate::of(&trs, n_resamples, level, rng)?)
        };
        let threshold_curve = thresholds
            .iter()
            .enumerate()
            .map(|(i, &theta)| {
                let vals: Vec<f64> = seeds.iter().map(|s| s.ttt_curve[i]).collect();
                let a = Aggregate::of(&vals, n_resamples, level, rng)?;
                Ok(ThresholdPoint {
                    theta,
                    ttt_iqm: a.iqm,
                    ci_low: a.ci_low,
                    ci_high: a.ci_high,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(Self {
            thresholds: thresholds.to_vec(),
            tr_infinite_seeds: seeds.len() - trs.len(),
            seeds,
            ttt_auc,
            js,
            tr,
            threshold_curve,
        })
    }

    pub fn threshold_csv(&self) -> String {
        let mut out = String::from("theta,ttt_iqm,ci_low,ci_high\n");
        for p in &self.threshold_curve {
            let _ = writeln!(out, "{},{},{},{}", p.theta, p.ttt_iqm, p.ci_low, p.ci_high);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h(progress: &[f64], returns: &[f64]) -> TrainingHistory {
        TrainingHistory {
            points: progress
                .iter()
                .zip(returns)
                .map(|(&p, &r)| HistoryPoint {
                    progress_percent: p,
                    env_steps: 0,
                    mean_return: r,
                })
                .collect(),
        }
    }

    #[test]
    fn ttt_examples() {
        let hist = h(&[0.0, 33.0, 67.0, 100.0], &[0.0, 0.2, 0.5, 0.7]);
        assert_eq!(ttt(&hist, 0.5), 67.0);
        assert_eq!(ttt(&hist, 0.0), 0.0);
        assert_eq!(ttt(&hist, 0.9), 100.0);
    }

    #[test]
    fn ttt_auc_examples() {
        let grid = threshold_grid(DEFAULT_THRESHOLD_POINTS);
        assert_eq!(grid.len(), 51);
        assert!((grid[1] - 0.02).abs() < 1e-15 && grid[50] == 1.0);
        let zeros = TrainingHistory::from_returns(&[0.0; 101]);
        assert!((ttt_auc(&zeros, &grid) - 5000.0 / 51.0).abs() < 1e-12);
        let ones = TrainingHistory::from_returns(&[1.0; 101]);
        assert_eq!(ttt_auc(&ones, &grid), 0.0);
        let step: Vec<f64> = (0..101).map(|i| if i >= 50 { 1.0 } else { 0.0 }).collect();
        let step = TrainingHistory::from_returns(&step);
        assert!((ttt_auc(&step, &grid) - 2500.0 / 51.0).abs() < 1e-12);
    }

    #[test]
    fn js_tr_iqm_examples() {
        assert_eq!(js(&TrainingHistory::from_returns(&[0.75, 0.8])), 0.75);
        let a = TrainingHistory::from_returns(&[0.6, 0.6]);
        let b = TrainingHistory::from_returns(&[0.5, 0.5]);
        let TransferRatio::Finite(r) = tr(&a, &b) else { panic!() };
        assert!((r - 0.2).abs() < 1e-12);
        assert_eq!(tr(&a, &TrainingHistory::from_returns(&[0.0, 0.0])), TransferRatio::Infinite);
        assert_eq!(iqm(&[0.0, 2.0, 3.0, 100.0]).unwrap(), 2.5);
        assert_eq!(iqm(&[7.0; 5]).unwrap(), 7.0);
        assert_eq!(iqm(&[]), Err(EvalError::NoValues));
    }

    #[test]
    fn degenerate_ci_has_zero_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Aggregate::of(&[3.0; 5], 2000, 0.95, &mut rng).unwrap();
        assert_eq!((a.iqm, a.ci_low, a.ci_high, a.std), (3.0, 3.0, 3.0, 0.0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut hist = TrainingHistory::from_returns(&[0.0, 0.1 + 0.2, 1.0 / 3.0, 0.99f64.powi(7)]);
        hist.points[2].env_steps = 123_456;
        let back = TrainingHistory::from_csv(&hist.to_csv()).unwrap();
        assert_eq!(back, hist);
        assert!(TrainingHistory::from_csv("progress_percent,env_steps,mean_return\n5,0,0\n1,0,0\n").is_err());
        assert!(TrainingHistory::from_csv("nope\n").is_err());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
    }
}
