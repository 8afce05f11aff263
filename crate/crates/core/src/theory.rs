//! Closed-form asymptotics of the pooled estimator and the sawtooth
//! identifiability toolkit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, TiePolicy};
use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::stats::trapezoid;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative finite-difference step, scaled by the support length.
pub const FD_STEP_FRACTION: f64 = 1e-5;

const QUADRATURE_POINTS: usize = 20_001;
const MONOTONE_CHECK_POINTS: usize = 1_001;

pub fn real_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> RealFn {
    Arc::new(f)
}

/// A sampling density on `[lo, hi]`, zero outside.
#[derive(Clone)]
pub struct DensityFn {
    pdf: RealFn,
    derivative: Option<RealFn>,
    support: (f64, f64),
}

impl DensityFn {
    pub fn new(support: (f64, f64), pdf: RealFn) -> Self {
        Self {
            pdf,
            derivative: None,
            support,
        }
    }

    pub fn with_derivative(mut self, d: RealFn) -> Self {
        self.derivative = Some(d);
        self
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Membership up to a relative slack of `1e-12`, so that numerically
    /// inverted endpoints still count.
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.support.1 - self.support.0);
        x >= self.support.0 - slack && x <= self.support.1 + slack
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.contains(x) {
            (self.pdf)(x.clamp(self.support.0, self.support.1))
        } else {
            0.0
        }
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match &self.derivative {
            Some(d) => d(x),
            None => {
                let step = fd_step(self.support);
                central_difference(|u| self.pdf(u), x, step)
            }
        }
    }
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("support", &self.support)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

fn fd_step(support: (f64, f64)) -> f64 {
    FD_STEP_FRACTION * (support.1 - support.0)
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

fn second_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step)
}

/// Model ingredients of the asymptotic MSE: sampling densities, mean
/// function, true warp and noise levels. Missing derivatives are replaced by
/// central finite differences.
#[derive(Clone)]
pub struct ModelSpec {
    pub f1: DensityFn,
    pub f2: DensityFn,
    pub m: RealFn,
    pub m_d1: Option<RealFn>,
    pub m_d2: Option<RealFn>,
    pub g0: RealFn,
    pub g0_inverse: RealFn,
    pub g0_inverse_d1: Option<RealFn>,
    pub g0_inverse_d2: Option<RealFn>,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub xi: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("f1", &self.f1)
            .field("f2", &self.f2)
            .field("sigma1_sq", &self.sigma1_sq)
            .field("sigma2_sq", &self.sigma2_sq)
            .field("xi", &self.xi)
            .finish_non_exhaustive()
    }
}

/// Which derivatives were taken by finite differences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivativeSources {
    pub finite_difference: Vec<String>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::InvalidModel(format!("xi = {} outside (0, 1]", self.xi)));
        }
        for (name, s) in [("sigma1_sq", self.sigma1_sq), ("sigma2_sq", self.sigma2_sq)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} = {s} must be finite and >= 0")));
            }
        }
        for (name, d) in [("f1", &self.f1), ("f2", &self.f2)] {
            let (lo, hi) = d.support;
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} support [{lo}, {hi}] is empty")));
            }
            let x: Vec<f64> = (0..QUADRATURE_POINTS)
                .map(|i| lo + (hi - lo) * i as f64 / (QUADRATURE_POINTS - 1) as f64)
                .collect();
            let y: Vec<f64> = x.iter().map(|&u| d.pdf(u)).collect();
            if let Some(bad) = y.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::InvalidModel(format!("{name} takes value {bad}")));
            }
            let mass = trapezoid(&x, &y);
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidModel(format!("{name} integrates to {mass}")));
            }
        }
        let (c, d) = self.f2.support;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..MONOTONE_CHECK_POINTS {
            let s = c + (d - c) * i as f64 / (MONOTONE_CHECK_POINTS - 1) as f64;
            let g = (self.g0)(s);
            if !(g > prev) {
                return Err(Error::InvalidModel(format!("g0 is not strictly increasing near {s}")));
            }
            prev = g;
        }
        Ok(())
    }

    fn first_step(&self) -> f64 {
        fd_step(self.f1.support)
    }

    pub fn m_d1(&self, t: f64) -> f64 {
        match &self.m_d1 {
            Some(f) => f(t),
            None => central_difference(|u| (self.m)(u), t, self.first_step()),
        }
    }

    pub fn m_d2(&self, t: f64) -> f64 {
        match &self.m_d2 {
            Some(f) => f(t),
            None => second_difference(|u| (self.m)(u), t, self.first_step()),
        }
    }

    pub fn g0_inverse_d1(&self, t: f64) -> f64 {
        match &self.g0_inverse_d1 {
            Some(f) => f(t),
            None => central_difference(|u| (self.g0_inverse)(u), t, self.first_step()),
        }
    }

    pub fn g0_inverse_d2(&self, t: f64) -> f64 {
        match &self.g0_inverse_d2 {
            Some(f) => f(t),
            None => second_difference(|u| (self.g0_inverse)(u), t, self.first_step()),
        }
    }

    /// `(1 - xi) f2(g0^{-1}(t)) (g0^{-1})'(t)`, the warped second-sample part.
    fn warped_second(&self, t: f64) -> f64 {
        if self.xi >= 1.0 {
            return 0.0;
        }
        (1.0 - self.xi) * self.f2.pdf((self.g0_inverse)(t)) * self.g0_inverse_d1(t)
    }

    /// Mixture density of the pooled times on the first sample's scale.
    pub fn f_g0(&self, t: f64) -> f64 {
        self.xi * self.f1.pdf(t) + self.warped_second(t)
    }

    fn analytic_f_g0_derivative(&self) -> bool {
        self.f1.has_derivative()
            && (self.xi >= 1.0
                || (self.f2.has_derivative()
                    && self.g0_inverse_d1.is_some()
                    && self.g0_inverse_d2.is_some()))
    }

    pub fn f_g0_derivative(&self, t: f64) -> f64 {
        if self.analytic_f_g0_derivative() {
            let mut d = self.xi * self.f1.derivative(t);
            if self.xi < 1.0 {
                let s = (self.g0_inverse)(t);
                let j = self.g0_inverse_d1(t);
                d += (1.0 - self.xi)
                    * (self.f2.derivative(s) * j * j + self.f2.pdf(s) * self.g0_inverse_d2(t));
            }
            d
        } else {
            central_difference(|u| self.f_g0(u), t, self.first_step())
        }
    }

    pub fn derivative_sources(&self) -> DerivativeSources {
        let mut fd = Vec::new();
        if self.m_d1.is_none() {
            fd.push("m'".to_string());
        }
        if self.m_d2.is_none() {
            fd.push("m''".to_string());
        }
        if !self.f1.has_derivative() {
            fd.push("f1'".to_string());
        }
        if self.xi < 1.0 && self.g0_inverse_d1.is_none() {
            fd.push("(g0^-1)'".to_string());
        }
        if !self.analytic_f_g0_derivative() {
            fd.push("f_g0'".to_string());
        }
        DerivativeSources { finite_difference: fd }
    }
}

/// Leading terms of the pointwise MSE of the pooled estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTerms {
    pub t: f64,
    pub n: usize,
    pub h: f64,
    pub f_g0: f64,
    pub variance: f64,
    pub bias_sq: f64,
    pub total: f64,
    pub derivatives: DerivativeSources,
}

pub fn asymptotic_mse(
    spec: &ModelSpec,
    kc: &KernelConstants,
    t: f64,
    n: usize,
    h: f64,
) -> Result<MseTerms> {
    spec.validate()?;
    let (a, b) = spec.f1.support;
    if !(t > a && t < b) {
        return Err(Error::InvalidConfig(format!("t = {t} is not interior to [{a}, {b}]")));
    }
    if n == 0 || !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("need n > 0 and h > 0, got n = {n}, h = {h}")));
    }
    let fg = spec.f_g0(t);
    if !(fg > 0.0) {
        return Err(Error::DensityZero(t));
    }
    let noise = spec.xi * spec.f1.pdf(t) * spec.sigma1_sq + spec.warped_second(t) * spec.sigma2_sq;
    let variance = noise / (n as f64 * h) * kc.k_l2 / (fg * fg);
    let bracket = spec.m_d2(t) + 2.0 * spec.m_d1(t) * spec.f_g0_derivative(t) / fg;
    let bias_sq = h.powi(4) / 4.0 * bracket * bracket * kc.mu2 * kc.mu2;
    Ok(MseTerms {
        t,
        n,
        h,
        f_g0: fg,
        variance,
        bias_sq,
        total: variance + bias_sq,
        derivatives: spec.derivative_sources(),
    })
}

/// Variance and squared-bias ratios of the pooled over the first-sample
/// estimator, split into a design factor and a sample-size factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRatios {
    pub t: f64,
    pub rho: f64,
    pub variance_ratio_factor2: f64,
    pub variance_ratio_limit_factor1: f64,
    pub bias_ratio_factor2: f64,
    pub bias_ratio_limit_factor1: f64,
}

pub const DEFAULT_BANDWIDTH_EXPONENT: f64 = 0.2;

pub fn improvement_ratios(spec: &ModelSpec, t: f64, bandwidth_exponent: f64) -> Result<ImprovementRatios> {
    spec.validate()?;
    let f1 = spec.f1.pdf(t);
    if !(f1 > 0.0) {
        return Err(Error::DensityZero(t));
    }
    let xi = spec.xi;
    let rho = spec.warped_second(t) / (xi * f1);
    let s = if spec.sigma1_sq > 0.0 {
        spec.sigma2_sq / spec.sigma1_sq
    } else {
        return Err(Error::InvalidModel("sigma1_sq must be positive".into()));
    };
    let variance_ratio_factor2 = (1.0 + rho * s) / ((1.0 + rho) * (1.0 + rho));

    let m1 = spec.m_d1(t);
    let m2 = spec.m_d2(t);
    let fg = spec.f_g0(t);
    let num = m2 + 2.0 * m1 * spec.f_g0_derivative(t) / fg;
    let slope_term = 2.0 * m1 * spec.f1.derivative(t) / f1;
    let den = m2 + slope_term;
    if den.abs() <= 1e-12 * m2.abs().max(slope_term.abs()) || den == 0.0 {
        return Err(Error::DivisionByZero(t));
    }
    Ok(ImprovementRatios {
        t,
        rho,
        variance_ratio_factor2,
        variance_ratio_limit_factor1: xi.powf(-bandwidth_exponent),
        bias_ratio_factor2: (num * num) / (den * den),
        bias_ratio_limit_factor1: xi.powf(4.0 * bandwidth_exponent),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityFamily {
    Uniform { lo: f64, hi: f64 },
    /// Linear density proportional to `1 + tilt (u - 1/2)` with `u` the
    /// position rescaled to `[0, 1]`; `|tilt| <= 2`.
    Linear { lo: f64, hi: f64, tilt: f64 },
}

impl DensityFamily {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DensityFamily::Uniform { lo, hi } | DensityFamily::Linear { lo, hi, .. } => (lo, hi),
        }
    }

    fn tilt(&self) -> f64 {
        match *self {
            DensityFamily::Uniform { .. } => 0.0,
            DensityFamily::Linear { tilt, .. } => tilt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidModel(format!("density support [{lo}, {hi}] is empty")));
        }
        if !(self.tilt().abs() <= 2.0) {
            return Err(Error::InvalidModel(format!("tilt {} outside [-2, 2]", self.tilt())));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let u = (x - lo) / (hi - lo);
        (1.0 + self.tilt() * (u - 0.5)) / (hi - lo)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        self.tilt() / ((hi - lo) * (hi - lo))
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        let (lo, hi) = self.support();
        let tilt = self.tilt();
        let b = 1.0 - tilt / 2.0;
        let u = 2.0 * p / (b + (b * b + 2.0 * tilt * p).max(0.0).sqrt());
        lo + (hi - lo) * u.clamp(0.0, 1.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }

    pub fn to_density_fn(self) -> DensityFn {
        DensityFn::new(self.support(), real_fn(move |x| self.pdf(x)))
            .with_derivative(real_fn(move |x| self.derivative(x)))
    }
}

/// `m(t) = scale * sum_k coeffs[k] t^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMean {
    pub coeffs: Vec<f64>,
}

impl PolynomialMean {
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> PolynomialMean {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        PolynomialMean { coeffs }
    }

    pub fn scaled(&self, c: f64) -> PolynomialMean {
        PolynomialMean {
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpFamily {
    Identity,
    Affine { slope: f64, intercept: f64 },
    /// `s + amplitude sin(2 pi cycles (s - lo) / (hi - lo))` on `[lo, hi]`.
    Sine { amplitude: f64, cycles: f64, lo: f64, hi: f64 },
}

impl WarpFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WarpFamily::Identity => Ok(()),
            WarpFamily::Affine { slope, intercept } => {
                if slope > 0.0 && slope.is_finite() && intercept.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(format!("affine warp slope {slope} must be positive")))
                }
            }
            WarpFamily::Sine { amplitude, cycles, lo, hi } => {
                let w = 2.0 * PI * cycles / (hi - lo);
                if lo < hi && (amplitude * w).abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidModel("sine warp is not strictly increasing".into()))
                }
            }
        }
    }

    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            WarpFamily::Identity => s,
            WarpFamily::Affine { slope, intercept } => slope * s + intercept,
            WarpFamily::Sine { amplitude, cycles, lo, hi } => {
                s + amplitude * (2.0 * PI * cycles * (s - lo) / (hi - lo)).sin()
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            WarpFamily::Identity => 1.0,
            WarpFamily::Affine { slope, .. } => slope,
            WarpFamily::Sine { amplitude, cycles, lo, hi } => {
                let w = 2.0 * PI * cycles / (hi - lo);
                1.0 + amplitude * w * (w * (s - lo)).cos()
            }
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match *self {
            WarpFamily::Identity | WarpFamily::Affine { .. } => 0.0,
            WarpFamily::Sine { amplitude, cycles, lo, hi } => {
                let w = 2.0 * PI * cycles / (hi - lo);
                -amplitude * w * w * (w * (s - lo)).sin()
            }
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        match *self {
            WarpFamily::Identity => t,
            WarpFamily::Affine { slope, intercept } => (t - intercept) / slope,
            WarpFamily::Sine { amplitude, .. } => {
                let mut lo = t - amplitude.abs() - 1.0;
                let mut hi = t + amplitude.abs() + 1.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if self.apply(mid) < t {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn inverse_derivative(&self, t: f64) -> f64 {
        1.0 / self.derivative(self.inverse(t))
    }

    pub fn inverse_second_derivative(&self, t: f64) -> f64 {
        let s = self.inverse(t);
        let d = self.derivative(s);
        -self.second_derivative(s) / (d * d * d)
    }
}

/// A fully analytic model: closed-form densities, polynomial mean and a
/// parametric warp, with all derivatives supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    pub f1: DensityFamily,
    pub f2: DensityFamily,
    pub mean: PolynomialMean,
    pub warp: WarpFamily,
    pub sigma1: f64,
    pub sigma2: f64,
    pub xi: f64,
}

impl Default for AnalyticModel {
    fn default() -> Self {
        Self {
            f1: DensityFamily::Uniform { lo: 0.0, hi: 1.0 },
            f2: DensityFamily::Uniform { lo: 0.0, hi: 1.0 },
            mean: PolynomialMean {
                coeffs: vec![0.0, 0.0, 1.0],
            },
            warp: WarpFamily::Identity,
            sigma1: 0.1,
            sigma2: 0.1,
            xi: 1.0,
        }
    }
}

fn parse_number(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}' as a number")))
}

fn parse_density(prefix: &str, map: &BTreeMap<String, String>) -> Result<DensityFamily> {
    let get = |k: &str, default: f64| -> Result<f64> {
        match map.get(&format!("{prefix}_{k}")) {
            Some(v) => parse_number(&format!("{prefix}_{k}"), v),
            None => Ok(default),
        }
    };
    let lo = get("lo", 0.0)?;
    let hi = get("hi", 1.0)?;
    match map.get(prefix).map(|s| s.trim()).unwrap_or("uniform") {
        "uniform" => Ok(DensityFamily::Uniform { lo, hi }),
        "linear" => Ok(DensityFamily::Linear {
            lo,
            hi,
            tilt: get("tilt", 1.0)?,
        }),
        other => Err(Error::InvalidConfig(format!("{prefix}: unknown density '{other}'"))),
    }
}

impl AnalyticModel {
    /// Builds a model from `key=value` pairs. Recognised keys: `f1`, `f2`
    /// (`uniform` | `linear`) with `_lo`, `_hi`, `_tilt`; `mean` as
    /// comma-separated polynomial coefficients; `warp` (`identity` | `affine`
    /// | `sine`) with `warp_slope`, `warp_intercept`, `warp_amplitude`,
    /// `warp_cycles`; `sigma1`, `sigma2`, `xi`.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "f1", "f1_lo", "f1_hi", "f1_tilt", "f2", "f2_lo", "f2_hi", "f2_tilt", "mean", "warp",
            "warp_slope", "warp_intercept", "warp_amplitude", "warp_cycles", "sigma1", "sigma2", "xi",
        ];
        if let Some(k) = map.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown model key '{k}'")));
        }
        let d = AnalyticModel::default();
        let f1 = parse_density("f1", map)?;
        let f2 = parse_density("f2", map)?;
        let mean = match map.get("mean") {
            Some(v) => PolynomialMean {
                coeffs: v
                    .split(',')
                    .map(|c| parse_number("mean", c))
                    .collect::<Result<Vec<_>>>()?,
            },
            None => d.mean,
        };
        let num = |k: &str, default: f64| -> Result<f64> {
            map.get(k).map_or(Ok(default), |v| parse_number(k, v))
        };
        let (lo, hi) = f2.support();
        let warp = match map.get("warp").map(|s| s.trim()).unwrap_or("identity") {
            "identity" => WarpFamily::Identity,
            "affine" => WarpFamily::Affine {
                slope: num("warp_slope", 1.0)?,
                intercept: num("warp_intercept", 0.0)?,
            },
            "sine" => WarpFamily::Sine {
                amplitude: num("warp_amplitude", 0.05)?,
                cycles: num("warp_cycles", 1.0)?,
                lo,
                hi,
            },
            other => return Err(Error::InvalidConfig(format!("warp: unknown family '{other}'"))),
        };
        let model = AnalyticModel {
            f1,
            f2,
            mean,
            warp,
            sigma1: num("sigma1", d.sigma1)?,
            sigma2: num("sigma2", d.sigma2)?,
            xi: num("xi", d.xi)?,
        };
        model.validate()?;
        Ok(model)
    }

    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn from_config_str(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.f1.validate()?;
        self.f2.validate()?;
        self.warp.validate()?;
        if self.mean.coeffs.is_empty() {
            return Err(Error::InvalidModel("mean needs at least one coefficient".into()));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 >= 0.0) {
            return Err(Error::InvalidModel("need sigma1 > 0 and sigma2 >= 0".into()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::InvalidModel(format!("xi = {} outside (0, 1]", self.xi)));
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec {
        let m = self.mean.clone();
        let m1 = m.derivative();
        let m2 = m1.derivative();
        let w = self.warp;
        ModelSpec {
            f1: self.f1.to_density_fn(),
            f2: self.f2.to_density_fn(),
            m: real_fn(move |t| m.eval(t)),
            m_d1: Some(real_fn(move |t| m1.eval(t))),
            m_d2: Some(real_fn(move |t| m2.eval(t))),
            g0: real_fn(move |s| w.apply(s)),
            g0_inverse: real_fn(move |t| w.inverse(t)),
            g0_inverse_d1: Some(real_fn(move |t| w.inverse_derivative(t))),
            g0_inverse_d2: Some(real_fn(move |t| w.inverse_second_derivative(t))),
            sigma1_sq: self.sigma1 * self.sigma1,
            sigma2_sq: self.sigma2 * self.sigma2,
            xi: self.xi,
        }
    }

    /// Draws `n` pooled observations, `round(xi n)` of them from the first
    /// sample. The second dataset is `None` when it would be empty.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(FunctionalDataset, Option<FunctionalDataset>)> {
        self.validate()?;
        let n1 = ((self.xi * n as f64).round() as usize).clamp(1, n.max(1));
        let n2 = n.saturating_sub(n1);
        let mut t1 = Vec::with_capacity(n1);
        let mut y1 = Vec::with_capacity(n1);
        for _ in 0..n1 {
            let t = self.f1.draw(rng);
            let e: f64 = StandardNormal.sample(rng);
            t1.push(t);
            y1.push(self.mean.eval(t) + self.sigma1 * e);
        }
        let (a, b) = self.f1.support();
        let ds1 = FunctionalDataset::with_ties("model_first", t1, y1, TiePolicy::Jitter)?.with_support(a, b)?;
        if n2 == 0 {
            return Ok((ds1, None));
        }
        let mut s2 = Vec::with_capacity(n2);
        let mut y2 = Vec::with_capacity(n2);
        for _ in 0..n2 {
            let s = self.f2.draw(rng);
            let e: f64 = StandardNormal.sample(rng);
            s2.push(s);
            y2.push(self.mean.eval(self.warp.apply(s)) + self.sigma2 * e);
        }
        let (c, d) = self.f2.support();
        let ds2 = FunctionalDataset::with_ties("model_second", s2, y2, TiePolicy::Jitter)?.with_support(c, d)?;
        Ok((ds1, Some(ds2)))
    }
}

/// Parses flat `key=value` text into a map; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got '{line}'"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Two-segment piecewise-linear warp of `[0, 1]` with breakpoint `t0`:
/// slope `v` below `t0` and `r` above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SawtoothWarp {
    t0: f64,
    r: f64,
}

impl SawtoothWarp {
    pub fn new(t0: f64, r: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 < 1.0) {
            return Err(Error::InvalidSawtooth(format!("t0 = {t0} outside (0, 1)")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidSawtooth(format!("r = {r} must be positive")));
        }
        let w = Self { t0, r };
        if !(w.v() > 0.0) {
            return Err(Error::InvalidSawtooth(format!(
                "lower slope v = {} is not positive (need r < {})",
                w.v(),
                1.0 / (1.0 - t0)
            )));
        }
        Ok(w)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn v(&self) -> f64 {
        lower_slope(self.t0, self.r)
    }

    /// Ratio of the geometric sequence toward 0: `v` when `v < 1`, else `1/v`.
    pub fn contraction(&self) -> f64 {
        let v = self.v();
        if v < 1.0 {
            v
        } else {
            1.0 / v
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t0 {
            self.v() * t
        } else {
            1.0 - self.r * (1.0 - t)
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        let x0 = self.v() * self.t0;
        if x <= x0 {
            x / self.v()
        } else {
            1.0 - (1.0 - x) / self.r
        }
    }
}

fn lower_slope(t0: f64, r: f64) -> f64 {
    (1.0 - r * (1.0 - t0)) / t0
}

/// The pair `g1, g2` on `[t0, 1]` with `g1^{-1} o g2 = g0` and
/// `(g1 + g2) / 2 = id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperPair {
    pub t0: f64,
    pub r: f64,
}

impl UpperPair {
    pub fn g1(&self, t: f64) -> f64 {
        1.0 - 2.0 * (1.0 - t) / (1.0 + self.r)
    }

    pub fn g2(&self, t: f64) -> f64 {
        1.0 - 2.0 * self.r * (1.0 - t) / (1.0 + self.r)
    }

    pub fn g1_inverse(&self, x: f64) -> f64 {
        1.0 - (1.0 - x) * (1.0 + self.r) / 2.0
    }
}

pub fn canonical_upper_pair(t0: f64, r: f64) -> Result<UpperPair> {
    SawtoothWarp::new(t0, r)?;
    Ok(UpperPair { t0, r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRoot {
    /// `None` when the root is at infinity.
    pub r: Option<f64>,
    pub lower_slope: Option<f64>,
    pub canonical_g1_t0: Option<f64>,
    pub feasible: bool,
}

fn root_info(t0: f64, r: Option<f64>) -> QuadraticRoot {
    match r {
        Some(r) if r.is_finite() => {
            let v = lower_slope(t0, r);
            let g1 = UpperPair { t0, r }.g1(t0);
            QuadraticRoot {
                r: Some(r),
                lower_slope: Some(v),
                canonical_g1_t0: Some(g1),
                feasible: r > 0.0 && v > 0.0 && g1 > 0.0 && g1 < 1.0,
            }
        }
        _ => QuadraticRoot {
            r: None,
            lower_slope: None,
            canonical_g1_t0: None,
            feasible: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub t0: f64,
    pub r: f64,
    pub v: f64,
    pub contraction: f64,
    pub exists: bool,
    /// `2 t0 q / (1 + q)` with `q` the contraction ratio.
    pub required_g1_t0: f64,
    pub canonical_g1_t0: f64,
    pub gap: f64,
    /// `2 t0 / (1 + v)`, the value forced by applying both identities at `t0`.
    pub identity_consistent_required_g1_t0: f64,
    pub identity_consistent_gap: f64,
    pub roots: [QuadraticRoot; 2],
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

pub fn symmetric_decomposition_check(t0: f64, r: f64) -> Result<SymmetryReport> {
    let w = SawtoothWarp::new(t0, r)?;
    let v = w.v();
    let q = w.contraction();
    let required = 2.0 * t0 * q / (1.0 + q);
    let canonical = UpperPair { t0, r }.g1(t0);
    let consistent = 2.0 * t0 / (1.0 + v);
    let second = if (1.0 - 2.0 * t0).abs() < f64::EPSILON {
        None
    } else {
        Some((1.0 + 2.0 * t0) / (1.0 - 2.0 * t0))
    };
    Ok(SymmetryReport {
        t0,
        r,
        v,
        contraction: q,
        exists: (r - 1.0).abs() <= SYMMETRY_TOLERANCE,
        required_g1_t0: required,
        canonical_g1_t0: canonical,
        gap: canonical - required,
        identity_consistent_required_g1_t0: consistent,
        identity_consistent_gap: canonical - consistent,
        roots: [root_info(t0, Some(1.0)), root_info(t0, second)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerSequence {
    pub t: Vec<f64>,
    pub g1: Vec<f64>,
    /// `|g1(t_n) - g1(t_{n+1})|` for consecutive terms.
    pub increments: Vec<f64>,
    /// `2 |canonical g1(t0) - required g1(t0)|`.
    pub limit_gap: f64,
}

/// Forced values of `g1` along `t_n = q^n t0`, starting from the canonical
/// upper pair, via `g1(t_n) = 2 t_n - g1(t_{n-1})`.
pub fn lower_extension_sequence(t0: f64, r: f64, n_terms: usize) -> Result<LowerSequence> {
    if n_terms == 0 {
        return Err(Error::InvalidConfig("n_terms must be at least 1".into()));
    }
    let report = symmetric_decomposition_check(t0, r)?;
    let q = report.contraction;
    let mut t = Vec::with_capacity(n_terms);
    let mut g1 = Vec::with_capacity(n_terms);
    t.push(t0);
    g1.push(report.canonical_g1_t0);
    for n in 1..n_terms {
        let tn = t[n - 1] * q;
        g1.push(2.0 * tn - g1[n - 1]);
        t.push(tn);
    }
    let increments = g1.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    Ok(LowerSequence {
        t,
        g1,
        increments,
        limit_gap: 2.0 * report.gap.abs(),
    })
}
