//! Model-based bootstrap bands for the plug-in estimator and the
//! leave-one-out comparison of pooled against single-sample smoothing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, TiePolicy};
use crate::error::{Error, Result};
use crate::estimator::{loocv_bandwidth, EstimateConfig, GridSpec, MeanCurve, PointFlag, PooledFit};
use crate::kernels::{DensityEstimate, Kernel, SmoothingSample};
use crate::registration::{register, RegistrationConfig};
use crate::rng::stream;
use crate::stats::{compensated_sum, quantile_sorted, sample_sd};
use crate::warp::{PiecewiseLinearWarp, TimeWarp};

/// Largest tolerated fraction of failed bootstrap replicates.
pub const MAX_REPLICATE_FAILURE_FRAC: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Draw times from kernel density estimates; otherwise keep the observed times.
    pub resample_times: bool,
    /// Add kernel noise to resampled residuals.
    pub smooth_residuals: bool,
    /// Multiplier on the resampled residuals; `0` gives noiseless replicates.
    pub residual_scale: f64,
    /// Reuse the fitted warp instead of re-registering each replicate.
    pub freeze_registration: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            alpha: 0.05,
            seed: 0,
            resample_times: true,
            smooth_residuals: true,
            residual_scale: 1.0,
            freeze_registration: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig("bootstrap needs at least 2 replicates".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.residual_scale >= 0.0 && self.residual_scale.is_finite()) {
            return Err(Error::InvalidConfig("residual scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Pointwise standard errors, percentile intervals and a simultaneous band.
/// Columns are NaN at grid points where the fitted curve is not `Ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    /// Half-width of the simultaneous band before widening to the intervals.
    pub band_halfwidth: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub failed: usize,
    pub seed: u64,
}

/// Kernel density of `sample` restricted to `[lo, hi]` by reflection.
struct ReflectedKde {
    kde: Option<DensityEstimate>,
    raw: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ReflectedKde {
    fn new(sample: &[f64], lo: f64, hi: f64) -> Self {
        Self {
            kde: DensityEstimate::fit(sample, Kernel::Gaussian).ok(),
            raw: sample.to_vec(),
            lo,
            hi,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match &self.kde {
            Some(kde) => kde.draw(rng, n).into_iter().map(|x| self.reflect(x)).collect(),
            None => (0..n).map(|_| self.raw[rng.random_range(0..self.raw.len())]).collect(),
        }
    }

    fn reflect(&self, mut x: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        if hi <= lo {
            return lo;
        }
        for _ in 0..8 {
            if x < lo {
                x = 2.0 * lo - x;
            } else if x > hi {
                x = 2.0 * hi - x;
            } else {
                return x;
            }
        }
        x.clamp(lo, hi)
    }
}

/// Centered residual pool with optional kernel smoothing.
struct ResidualPool {
    centered: Vec<f64>,
    kde: Option<DensityEstimate>,
}

impl ResidualPool {
    fn new(residuals: Vec<f64>, smooth: bool) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        let mean = compensated_sum(residuals.iter().copied()) / residuals.len() as f64;
        let centered: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
        let kde = if smooth {
            DensityEstimate::fit(&centered, Kernel::Gaussian).ok()
        } else {
            None
        };
        Ok(Self { centered, kde })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match &self.kde {
            Some(kde) => kde.draw(rng, n),
            None => (0..n)
                .map(|_| self.centered[rng.random_range(0..self.centered.len())])
                .collect(),
        }
    }
}

/// Evaluates the fitted curve, clamping times into the first support.
fn fitted_mean(fit: &PooledFit, t: f64, support: (f64, f64)) -> Option<f64> {
    fit.eval(t.clamp(support.0, support.1)).0
}

/// Model-based bootstrap: each replicate draws times from reflected kernel
/// density estimates of both designs, values from the fitted curve through
/// the fitted warp plus resampled residuals, re-registers, and re-estimates
/// on the fitted grid with the fitted bandwidth.
pub fn bootstrap(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    warp: &PiecewiseLinearWarp,
    curve: &MeanCurve,
    reg_cfg: &RegistrationConfig,
    est_cfg: &EstimateConfig,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary> {
    cfg.validate()?;
    if !curve.has_ok_points() {
        return Err(Error::AllPointsThin);
    }
    let rep_cfg = EstimateConfig {
        grid: GridSpec::Explicit(curve.grid.clone()),
        ..est_cfg.with_bandwidth(curve.bandwidth)
    };
    let fit = PooledFit::new(ds1, Some(ds2), warp, &rep_cfg)?;
    let sup1 = ds1.support();
    let sup2 = ds2.support();

    let mut res1 = Vec::with_capacity(ds1.len());
    for (&t, &y) in ds1.times().iter().zip(ds1.values()) {
        if let Some(m) = fitted_mean(&fit, t, sup1) {
            res1.push(y - m);
        }
    }
    let mut res2 = Vec::with_capacity(ds2.len());
    for (&s, &y) in ds2.times().iter().zip(ds2.values()) {
        if let Some(m) = fitted_mean(&fit, warp.apply(s), sup1) {
            res2.push(y - m);
        }
    }
    let pool1 = ResidualPool::new(res1, cfg.smooth_residuals)?;
    let pool2 = ResidualPool::new(res2, cfg.smooth_residuals)?;
    let times1 = ReflectedKde::new(ds1.times(), sup1.0, sup1.1);
    let times2 = ReflectedKde::new(ds2.times(), sup2.0, sup2.1);

    let replicate = |i: usize| -> Result<Vec<f64>> {
        let mut rng = stream(cfg.seed, i as u64);
        let (t1, t2) = if cfg.resample_times {
            (times1.draw(&mut rng, ds1.len()), times2.draw(&mut rng, ds2.len()))
        } else {
            (ds1.times().to_vec(), ds2.times().to_vec())
        };
        let e1 = pool1.draw(&mut rng, t1.len());
        let e2 = pool2.draw(&mut rng, t2.len());
        let y1 = t1
            .iter()
            .zip(&e1)
            .map(|(&t, e)| fitted_mean(&fit, t, sup1).map(|m| m + cfg.residual_scale * e))
            .collect::<Option<Vec<f64>>>()
            .ok_or(Error::AllPointsThin)?;
        let y2 = t2
            .iter()
            .zip(&e2)
            .map(|(&s, e)| fitted_mean(&fit, warp.apply(s), sup1).map(|m| m + cfg.residual_scale * e))
            .collect::<Option<Vec<f64>>>()
            .ok_or(Error::AllPointsThin)?;
        let b1 = FunctionalDataset::with_ties(ds1.label(), t1, y1, TiePolicy::Jitter)?
            .with_support(sup1.0, sup1.1)?;
        let b2 = FunctionalDataset::with_ties(ds2.label(), t2, y2, TiePolicy::Jitter)?
            .with_support(sup2.0, sup2.1)?;
        let out = if cfg.freeze_registration {
            PooledFit::new(&b1, Some(&b2), warp, &rep_cfg)?.curve(&rep_cfg.grid)?
        } else {
            let reg = register(&b1, &b2, reg_cfg)?;
            PooledFit::new(&b1, Some(&b2), &reg.warp, &rep_cfg)?.curve(&rep_cfg.grid)?
        };
        Ok(out.estimate)
    };

    let results: Vec<Result<Vec<f64>>> = (0..cfg.replicates).into_par_iter().map(replicate).collect();
    let total = results.len();
    let reps: Vec<Vec<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = total - reps.len();
    if failed as f64 > MAX_REPLICATE_FAILURE_FRAC * total as f64 || reps.len() < 2 {
        return Err(Error::ReplicateFailure { failed, total });
    }
    Ok(summarize_replicates(curve, &reps, cfg, failed))
}

fn summarize_replicates(curve: &MeanCurve, reps: &[Vec<f64>], cfg: &BootstrapConfig, failed: usize) -> BootstrapSummary {
    let g = curve.grid.len();
    let nan = vec![f64::NAN; g];
    let (mut se, mut ci_lo, mut ci_hi) = (nan.clone(), nan.clone(), nan.clone());
    let ok: Vec<bool> = curve.flags.iter().map(|f| *f == PointFlag::Ok).collect();
    for k in (0..g).filter(|&k| ok[k]) {
        let mut vals: Vec<f64> = reps.iter().map(|r| r[k]).filter(|v| v.is_finite()).collect();
        if vals.len() < 2 {
            continue;
        }
        se[k] = sample_sd(&vals);
        vals.sort_by(f64::total_cmp);
        ci_lo[k] = quantile_sorted(&vals, cfg.alpha / 2.0);
        ci_hi[k] = quantile_sorted(&vals, 1.0 - cfg.alpha / 2.0);
    }
    let mut sup_dev: Vec<f64> = reps
        .iter()
        .map(|r| {
            (0..g)
                .filter(|&k| ok[k] && r[k].is_finite())
                .map(|k| (r[k] - curve.estimate[k]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    sup_dev.sort_by(f64::total_cmp);
    let half = quantile_sorted(&sup_dev, 1.0 - cfg.alpha);
    let (mut band_lo, mut band_hi) = (nan.clone(), nan);
    for k in (0..g).filter(|&k| ok[k]) {
        let m = curve.estimate[k];
        band_lo[k] = if ci_lo[k].is_finite() { (m - half).min(ci_lo[k]) } else { m - half };
        band_hi[k] = if ci_hi[k].is_finite() { (m + half).max(ci_hi[k]) } else { m + half };
    }
    BootstrapSummary {
        grid: curve.grid.clone(),
        estimate: curve.estimate.clone(),
        se,
        ci_lo,
        ci_hi,
        band_lo,
        band_hi,
        band_halfwidth: half,
        alpha: cfg.alpha,
        replicates: reps.len() + failed,
        failed,
        seed: cfg.seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// Re-register after every deletion.
    Exact,
    /// Keep the full-data warp.
    #[default]
    Fast,
}

impl CvMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CvMode::Exact => "exact",
            CvMode::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CvConfig {
    pub mode: CvMode,
    /// Process only this many deletions, evenly spaced over all observations.
    pub max_deletions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Mean squared leave-one-out error of the first-sample smoother.
    pub cv_first_only: f64,
    /// Mean squared leave-one-out error of the pooled smoother over all deletions.
    pub cv_pooled: f64,
    /// The pooled error restricted to the first-sample points entering `cv_first_only`.
    pub cv_pooled_first_points: f64,
    pub mode: CvMode,
    pub deletions: usize,
    /// Deleted points that could not be predicted.
    pub skipped: usize,
    pub first_points: usize,
    pub bandwidth_first_only: f64,
    pub bandwidth_pooled: f64,
    /// `cv_pooled_first_points < cv_first_only`.
    pub useful: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    First(usize),
    Second(usize),
}

/// Pooled sample with each sorted position traced back to its observation.
struct TracedSample {
    sample: SmoothingSample,
    origin: Vec<Origin>,
}

fn traced_sample(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    warp: &dyn TimeWarp,
    reach: f64,
    omit: Option<Origin>,
) -> TracedSample {
    let (a, b) = ds1.support();
    let mut rows: Vec<(f64, f64, Origin)> = Vec::with_capacity(ds1.len() + ds2.len());
    for (i, (&t, &y)) in ds1.times().iter().zip(ds1.values()).enumerate() {
        rows.push((t, y, Origin::First(i)));
    }
    for (j, (&s, &y)) in ds2.times().iter().zip(ds2.values()).enumerate() {
        let g = warp.apply(s);
        if g >= a - reach && g <= b + reach {
            rows.push((g, y, Origin::Second(j)));
        }
    }
    rows.retain(|r| Some(r.2) != omit);
    rows.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let origin = rows.iter().map(|r| r.2).collect();
    TracedSample {
        sample: SmoothingSample::new(rows.into_iter().map(|r| (r.0, r.1)).collect()),
        origin,
    }
}

fn deletion_indices(total: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < total => (0..m).map(|k| k * total / m).collect(),
        _ => (0..total).collect(),
    }
}

/// Leave-one-out comparison of the pooled smoother (first sample plus the
/// registered second sample) against the first-sample smoother. Bandwidths
/// are resolved once on the full data.
pub fn cv_usefulness(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    reg_cfg: &RegistrationConfig,
    est_cfg: &EstimateConfig,
    cv_cfg: &CvConfig,
) -> Result<CvReport> {
    if ds1.is_empty() {
        return Err(Error::EmptyDataset(ds1.label().to_string()));
    }
    if ds2.is_empty() {
        return Err(Error::EmptyDataset(ds2.label().to_string()));
    }
    let kernel = est_cfg.kernel;
    let first = SmoothingSample::from_dataset(ds1);
    let h1 = match est_cfg.bandwidth.fixed() {
        Some(h) => h,
        None => loocv_bandwidth(&first, est_cfg)?,
    };
    let full = register(ds1, ds2, reg_cfg)?;
    let hp = PooledFit::new(ds1, Some(ds2), &full.warp, est_cfg)?.bandwidth();
    let reach = kernel.effective_radius() * hp;
    let (a, b) = ds1.support();

    let n1 = ds1.len();
    let total = n1 + ds2.len();
    let picks = deletion_indices(total, cv_cfg.max_deletions);
    let fast = match cv_cfg.mode {
        CvMode::Fast => {
            let ts = traced_sample(ds1, ds2, &full.warp, reach, None);
            let mut position = vec![None; total];
            for (k, o) in ts.origin.iter().enumerate() {
                match *o {
                    Origin::First(i) => position[i] = Some(k),
                    Origin::Second(j) => position[n1 + j] = Some(k),
                }
            }
            Some((ts, position))
        }
        CvMode::Exact => None,
    };

    let delete = |k: usize| -> Result<Option<(Origin, f64)>> {
        let origin = if k < n1 { Origin::First(k) } else { Origin::Second(k - n1) };
        let (target_t, target_y, sample) = match (&fast, origin) {
            (Some((ts, position)), _) => {
                let (t, y) = match origin {
                    Origin::First(i) => (ds1.times()[i], ds1.values()[i]),
                    Origin::Second(j) => (full.warp.apply(ds2.times()[j]), ds2.values()[j]),
                };
                (t, y, ts.sample.predict(t, hp, &kernel, position[k]))
            }
            (None, Origin::First(i)) => {
                let reduced = ds1.without(i)?;
                let w = register(&reduced, ds2, reg_cfg)?.warp;
                let (t, y) = (ds1.times()[i], ds1.values()[i]);
                let ts = traced_sample(ds1, ds2, &w, reach, Some(origin));
                (t, y, ts.sample.predict(t, hp, &kernel, None))
            }
            (None, Origin::Second(j)) => {
                let reduced = ds2.without(j)?;
                let w = register(ds1, &reduced, reg_cfg)?.warp;
                let (t, y) = (w.apply(ds2.times()[j]), ds2.values()[j]);
                let ts = traced_sample(ds1, ds2, &w, reach, Some(origin));
                (t, y, ts.sample.predict(t, hp, &kernel, None))
            }
        };
        if target_t < a || target_t > b {
            return Ok(None);
        }
        Ok(sample.map(|p| (origin, (target_y - p) * (target_y - p))))
    };

    let pooled: Vec<Option<(Origin, f64)>> = picks
        .par_iter()
        .map(|&k| delete(k))
        .collect::<Result<Vec<_>>>()?;

    let mut first_err = Vec::new();
    let mut pooled_first_err = Vec::new();
    for &(origin, e) in pooled.iter().flatten() {
        if let Origin::First(i) = origin {
            if let Some(p) = first.predict(ds1.times()[i], h1, &kernel, Some(i)) {
                let d = ds1.values()[i] - p;
                first_err.push(d * d);
                pooled_first_err.push(e);
            }
        }
    }
    let all: Vec<f64> = pooled.iter().flatten().map(|p| p.1).collect();
    if first_err.is_empty() || all.is_empty() {
        return Err(Error::AllPredictionsUndefined);
    }
    let mean = |v: &[f64]| compensated_sum(v.iter().copied()) / v.len() as f64;
    let cv_first_only = mean(&first_err);
    let cv_pooled_first_points = mean(&pooled_first_err);
    Ok(CvReport {
        cv_first_only,
        cv_pooled: mean(&all),
        cv_pooled_first_points,
        mode: cv_cfg.mode,
        deletions: picks.len(),
        skipped: picks.len() - all.len(),
        first_points: first_err.len(),
        bandwidth_first_only: h1,
        bandwidth_pooled: hp,
        useful: cv_pooled_first_points < cv_first_only,
    })
}
