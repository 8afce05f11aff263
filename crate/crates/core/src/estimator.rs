//! Pooled Nadaraya-Watson estimation of the common mean function.

use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::error::{Error, Result};
use crate::kernels::{default_bandwidth_grid, select_bandwidth_loocv, Bandwidth, Kernel, SmoothingSample};
use crate::registration::{register, RegistrationConfig, RegistrationResult};
use crate::warp::TimeWarp;

/// Which sample the automatic bandwidth is cross-validated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvSample {
    #[default]
    Pooled,
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// `size` equidistant points on `[a + h, b - h]` for first support `[a, b]`.
    Interior { size: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub bandwidth: Bandwidth,
    pub kernel: Kernel,
    pub grid: GridSpec,
    pub mass_floor: f64,
    /// Candidate bandwidths for the automatic choice; defaults to the
    /// 20-point log grid around a pilot bandwidth.
    pub bandwidth_grid: Option<Vec<f64>>,
    pub cv_sample: CvSample,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            kernel: Kernel::GaussianTruncated { cutoff: 8.0 },
            grid: GridSpec::Interior { size: 512 },
            mass_floor: 1e-12,
            bandwidth_grid: None,
            cv_sample: CvSample::Pooled,
        }
    }
}

impl EstimateConfig {
    pub fn with_bandwidth(&self, h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            ..self.clone()
        }
    }

    pub fn with_grid(&self, grid: Vec<f64>) -> Self {
        Self {
            grid: GridSpec::Explicit(grid),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.mass_floor > 0.0) {
            return Err(Error::InvalidConfig("mass floor must be positive".into()));
        }
        match &self.grid {
            GridSpec::Interior { size } if *size < 2 => {
                Err(Error::InvalidConfig("grid size must be at least 2".into()))
            }
            GridSpec::Explicit(g) if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) => Err(
                Error::InvalidConfig("explicit grid must be non-empty and strictly ascending".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    Ok,
    ThinSupport,
    OutsideRange,
}

impl PointFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointFlag::Ok => "ok",
            PointFlag::ThinSupport => "thin_support",
            PointFlag::OutsideRange => "outside_range",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// Second-sample points whose warped time fell outside the kernel reach
    /// of the first support.
    pub dropped_second_sample: usize,
}

/// Estimated mean function on an evaluation grid. `estimate` is NaN wherever
/// the flag is not `Ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Normalized kernel denominator `(1/(n h)) sum K`.
    pub mass: Vec<f64>,
    pub flags: Vec<PointFlag>,
    pub bandwidth: f64,
    pub diagnostics: EstimateDiagnostics,
}

impl MeanCurve {
    pub fn ok_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid
            .iter()
            .zip(&self.estimate)
            .zip(&self.flags)
            .filter(|(_, f)| **f == PointFlag::Ok)
            .map(|((t, m), _)| (*t, *m))
    }

    pub fn has_ok_points(&self) -> bool {
        self.flags.contains(&PointFlag::Ok)
    }
}

/// The pooled smoother with a resolved bandwidth, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct PooledFit {
    sample: SmoothingSample,
    n_total: usize,
    bandwidth: f64,
    kernel: Kernel,
    mass_floor: f64,
    support: (f64, f64),
    diagnostics: EstimateDiagnostics,
}

fn pooled_pairs(
    ds1: &FunctionalDataset,
    ds2: Option<&FunctionalDataset>,
    warp: &dyn TimeWarp,
) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = ds1.times().iter().copied().zip(ds1.values().iter().copied()).collect();
    if let Some(ds2) = ds2 {
        pairs.extend(ds2.times().iter().map(|&s| warp.apply(s)).zip(ds2.values().iter().copied()));
    }
    pairs
}

/// Cross-validated bandwidth for `sample` over the configured or default grid.
pub fn loocv_bandwidth(sample: &SmoothingSample, cfg: &EstimateConfig) -> Result<f64> {
    let grid = match &cfg.bandwidth_grid {
        Some(g) => g.clone(),
        None => default_bandwidth_grid(sample.times())?,
    };
    select_bandwidth_loocv(sample, &grid, &cfg.kernel)
}

impl PooledFit {
    pub fn new(
        ds1: &FunctionalDataset,
        ds2: Option<&FunctionalDataset>,
        warp: &dyn TimeWarp,
        cfg: &EstimateConfig,
    ) -> Result<Self> {
        if ds1.is_empty() {
            return Err(Error::EmptyFirstDataset);
        }
        cfg.validate()?;
        let pairs = pooled_pairs(ds1, ds2, warp);
        let n_total = pairs.len();
        let bandwidth = match cfg.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(Error::InvalidBandwidth(format!("h_n = {h}"))),
            Bandwidth::Auto => match cfg.cv_sample {
                CvSample::Pooled => loocv_bandwidth(&SmoothingSample::new(pairs.clone()), cfg)?,
                CvSample::First => loocv_bandwidth(&SmoothingSample::from_dataset(ds1), cfg)?,
            },
        };

        let (a, b) = ds1.support();
        let reach = cfg.kernel.effective_radius() * bandwidth;
        let n1 = ds1.len();
        let mut kept = Vec::with_capacity(n_total);
        let mut dropped = 0;
        for (idx, p) in pairs.into_iter().enumerate() {
            if idx >= n1 && (p.0 < a - reach || p.0 > b + reach) {
                dropped += 1;
            } else {
                kept.push(p);
            }
        }
        Ok(Self {
            sample: SmoothingSample::new(kept),
            n_total,
            bandwidth,
            kernel: cfg.kernel,
            mass_floor: cfg.mass_floor,
            support: (a, b),
            diagnostics: EstimateDiagnostics {
                dropped_second_sample: dropped,
            },
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample(&self) -> &SmoothingSample {
        &self.sample
    }

    /// `(estimate, normalized mass)`; the estimate is `None` below the mass floor.
    pub fn eval(&self, t: f64) -> (Option<f64>, f64) {
        let s = self.sample.local_sums(t, self.bandwidth, &self.kernel, None);
        let mass = s.weight / (self.n_total as f64 * self.bandwidth);
        if mass < self.mass_floor || s.weight <= 0.0 {
            (None, mass)
        } else {
            (Some(self.sample.reference() + s.weighted_dev / s.weight), mass)
        }
    }

    pub fn grid(&self, spec: &GridSpec) -> Result<Vec<f64>> {
        match spec {
            GridSpec::Explicit(g) => Ok(g.clone()),
            GridSpec::Interior { size } => {
                let (a, b) = self.support;
                let (lo, hi) = (a + self.bandwidth, b - self.bandwidth);
                if !(hi > lo) {
                    return Err(Error::InvalidConfig(format!(
                        "bandwidth {} leaves no interior of [{a}, {b}]",
                        self.bandwidth
                    )));
                }
                Ok((0..*size)
                    .map(|i| lo + (hi - lo) * i as f64 / (*size - 1) as f64)
                    .collect())
            }
        }
    }

    pub fn curve(&self, spec: &GridSpec) -> Result<MeanCurve> {
        let grid = self.grid(spec)?;
        let (a, b) = self.support;
        let mut estimate = Vec::with_capacity(grid.len());
        let mut mass = Vec::with_capacity(grid.len());
        let mut flags = Vec::with_capacity(grid.len());
        for &t in &grid {
            let (m, w) = self.eval(t);
            mass.push(w);
            let inside = (a < b && t > a && t < b) || (a == b && t == a);
            match (inside, m) {
                (false, _) => {
                    flags.push(PointFlag::OutsideRange);
                    estimate.push(f64::NAN);
                }
                (true, None) => {
                    flags.push(PointFlag::ThinSupport);
                    estimate.push(f64::NAN);
                }
                (true, Some(m)) => {
                    flags.push(PointFlag::Ok);
                    estimate.push(m);
                }
            }
        }
        let curve = MeanCurve {
            grid,
            estimate,
            mass,
            flags,
            bandwidth: self.bandwidth,
            diagnostics: self.diagnostics,
        };
        if !curve.has_ok_points() {
            return Err(Error::AllPointsThin);
        }
        Ok(curve)
    }
}

/// Nadaraya-Watson estimate of the mean from the first sample pooled with the
/// second sample's times mapped through `warp`. With `ds2 = None` this is the
/// ordinary single-sample estimator.
pub fn pooled_nw(
    ds1: &FunctionalDataset,
    ds2: Option<&FunctionalDataset>,
    warp: &dyn TimeWarp,
    cfg: &EstimateConfig,
) -> Result<MeanCurve> {
    PooledFit::new(ds1, ds2, warp, cfg)?.curve(&cfg.grid)
}

pub fn first_sample_nw(ds1: &FunctionalDataset, cfg: &EstimateConfig) -> Result<MeanCurve> {
    pooled_nw(ds1, None, &crate::warp::Identity, cfg)
}

/// Registers `ds2` onto `ds1` and evaluates the pooled estimator with the
/// estimated warp.
pub fn plugin_estimate(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    reg_cfg: &RegistrationConfig,
    est_cfg: &EstimateConfig,
) -> Result<(RegistrationResult, MeanCurve)> {
    if ds1.is_empty() {
        return Err(Error::EmptyFirstDataset);
    }
    let reg = register(ds1, ds2, reg_cfg)?;
    let curve = pooled_nw(ds1, Some(ds2), &reg.warp, est_cfg)?;
    Ok((reg, curve))
}
