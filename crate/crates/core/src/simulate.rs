//! Synthetic data under the two-sample warping model and Monte Carlo
//! comparison of the single-sample, plug-in and oracle estimators.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::data::{FunctionalDataset, TiePolicy};
use crate::error::{Error, Result};
use crate::estimator::{EstimateConfig, GridSpec, PooledFit};
use crate::kernels::Bandwidth;
use crate::registration::{register, RegistrationConfig};
use crate::rng::stream;
use crate::stats::{compensated_sum, sample_sd, trapezoid};
use crate::warp::{Identity, PiecewiseLinearWarp, TimeWarp};

/// Length of the simulated time range `[0, SIM_LENGTH]`.
pub const SIM_LENGTH: f64 = 415.0;

/// Number of equidistant interior points of the IMSE grid.
pub const IMSE_GRID_SIZE: usize = 256;

/// Maximum fraction of failed Monte Carlo runs.
pub const MAX_RUN_FAILURE_FRAC: f64 = 0.05;

/// `t + 0.05 t sin(4 pi t / 415)`, the default true warp.
pub fn true_warp_sim(t: f64) -> f64 {
    SineWarp::default().apply(t)
}

/// `t + amplitude * t * sin(2 pi cycles t / length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineWarp {
    pub amplitude: f64,
    pub cycles: f64,
    pub length: f64,
}

impl Default for SineWarp {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            cycles: 2.0,
            length: SIM_LENGTH,
        }
    }
}

impl SineWarp {
    pub fn derivative(&self, t: f64) -> f64 {
        let w = 2.0 * PI * self.cycles / self.length;
        1.0 + self.amplitude * (w * t).sin() + self.amplitude * w * t * (w * t).cos()
    }
}

impl TimeWarp for SineWarp {
    fn apply(&self, t: f64) -> f64 {
        t + self.amplitude * t * (2.0 * PI * self.cycles * t / self.length).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueWarp {
    Sine(SineWarp),
    PiecewiseLinear(PiecewiseLinearWarp),
    Identity,
}

impl Default for TrueWarp {
    fn default() -> Self {
        TrueWarp::Sine(SineWarp::default())
    }
}

impl TimeWarp for TrueWarp {
    fn apply(&self, t: f64) -> f64 {
        match self {
            TrueWarp::Sine(w) => w.apply(t),
            TrueWarp::PiecewiseLinear(w) => w.eval(t),
            TrueWarp::Identity => t,
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            TrueWarp::PiecewiseLinear(w) => w.knots(),
            _ => &[],
        }
    }
}

/// Linear sampling density on `[0, L]`: `(1 + tilt (t/L - 1/2)) / L`, with
/// `tilt` in `[-2, 2]`. `tilt = 1` gives `(t/L + 1/2)/L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDensity {
    pub tilt: f64,
    pub length: f64,
}

impl Default for LinearDensity {
    fn default() -> Self {
        Self {
            tilt: 1.0,
            length: SIM_LENGTH,
        }
    }
}

impl LinearDensity {
    pub fn pdf(&self, t: f64) -> f64 {
        if !(0.0..=self.length).contains(&t) {
            return 0.0;
        }
        (1.0 + self.tilt * (t / self.length - 0.5)) / self.length
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let x = (t / self.length).clamp(0.0, 1.0);
        x + 0.5 * self.tilt * (x * x - x)
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.tilt.abs() < 1e-12 {
            return u * self.length;
        }
        let b = 1.0 - 0.5 * self.tilt;
        // Root of (tilt/2) x^2 + b x - u = 0 in the cancellation-free form.
        let x = 2.0 * u / (b + (b * b + 2.0 * self.tilt * u).sqrt());
        (x * self.length).clamp(0.0, self.length)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tilt.abs() <= 2.0 && self.length > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "linear density needs |tilt| <= 2 and positive length, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Corner nodes of the built-in mean: four glacial-style cycles on
/// `[0, 415]`, each a slow decline followed by a rapid rise, spanning 180 to
/// 280.
pub const BUILTIN_NODES: [(f64, f64); 9] = [
    (0.0, 250.0),
    (60.0, 180.0),
    (95.0, 270.0),
    (170.0, 190.0),
    (205.0, 280.0),
    (280.0, 185.0),
    (315.0, 275.0),
    (390.0, 200.0),
    (415.0, 230.0),
];

/// Gaussian SD used to round the corners of the built-in mean.
pub const BUILTIN_CORNER_SD: f64 = 2.0;

/// `E[max(x + s Z, 0)]` for standard normal `Z`: a ramp with its kink
/// smoothed at scale `s`.
fn smooth_ramp(x: f64, s: f64) -> f64 {
    let z = x / s;
    x * 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2)) + s * (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// The built-in mean: the piecewise-linear interpolant of [`BUILTIN_NODES`]
/// convolved with a Gaussian of SD [`BUILTIN_CORNER_SD`], extended linearly.
pub fn builtin_mean(t: f64) -> f64 {
    let n = &BUILTIN_NODES;
    let slope = |k: usize| (n[k + 1].1 - n[k].1) / (n[k + 1].0 - n[k].0);
    let mut m = n[0].1 + slope(0) * (t - n[0].0);
    for k in 1..n.len() - 1 {
        m += (slope(k) - slope(k - 1)) * smooth_ramp(t - n[k].0, BUILTIN_CORNER_SD);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFunction {
    Builtin,
    /// Linear interpolation through `(t, m)` nodes, constant beyond the ends.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl Default for MeanFunction {
    fn default() -> Self {
        MeanFunction::Builtin
    }
}

impl MeanFunction {
    pub fn tabulated(ds: &FunctionalDataset) -> Result<Self> {
        if ds.len() < 2 {
            return Err(Error::InsufficientPoints {
                needed: 2,
                got: ds.len(),
            });
        }
        Ok(MeanFunction::Tabulated {
            times: ds.times().to_vec(),
            values: ds.values().to_vec(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFunction::Builtin => builtin_mean(t),
            MeanFunction::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                let u = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + u * (values[k + 1] - values[k])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n1: usize,
    pub n2: usize,
    pub length: f64,
    pub mean: MeanFunction,
    pub noise_frac: f64,
    pub warp: TrueWarp,
    pub f2: LinearDensity,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n1: 500,
            n2: 500,
            length: SIM_LENGTH,
            mean: MeanFunction::Builtin,
            noise_frac: 0.10,
            warp: TrueWarp::default(),
            f2: LinearDensity::default(),
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_frac >= 0.0 && self.noise_frac.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_frac must be non-negative, got {}",
                self.noise_frac
            )));
        }
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::InvalidConfig("n1 and n2 must be at least 2".into()));
        }
        if !(self.length > 0.0) {
            return Err(Error::InvalidConfig("length must be positive".into()));
        }
        self.f2.validate()?;
        let grid: Vec<f64> = (0..=4096).map(|i| self.length * i as f64 / 4096.0).collect();
        if grid.windows(2).any(|w| !(self.warp.apply(w[1]) > self.warp.apply(w[0]))) {
            return Err(Error::InvalidConfig("true warp is not strictly increasing".into()));
        }
        Ok(())
    }

    /// The fixed IMSE grid: midpoints of 256 equal cells of `[0, L]`.
    pub fn imse_grid(&self) -> Vec<f64> {
        (0..IMSE_GRID_SIZE)
            .map(|i| self.length * (i as f64 + 0.5) / IMSE_GRID_SIZE as f64)
            .collect()
    }
}

/// Draws one pair under the model: first times uniform, second times from
/// the linear density, values `m(t) + e1` and `m(g0(s)) + e2`. Both noise SDs
/// equal `noise_frac` times the SD of `m` over the realized first times.
pub fn generate_pair<R: Rng + ?Sized>(
    spec: &SimSpec,
    rng: &mut R,
) -> Result<(FunctionalDataset, FunctionalDataset)> {
    spec.validate()?;
    let l = spec.length;
    let t1: Vec<f64> = (0..spec.n1).map(|_| rng.random::<f64>() * l).collect();
    let t2: Vec<f64> = (0..spec.n2)
        .map(|_| spec.f2.inverse_cdf(rng.random::<f64>()))
        .collect();
    let m1: Vec<f64> = t1.iter().map(|&t| spec.mean.eval(t)).collect();
    let m2: Vec<f64> = t2
        .iter()
        .map(|&s| spec.mean.eval(spec.warp.apply(s)))
        .collect();
    let sd = spec.noise_frac * sample_sd(&m1);
    let (y1, y2) = if sd > 0.0 {
        let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let y1 = m1.iter().map(|m| m + noise.sample(rng)).collect();
        let y2 = m2.iter().map(|m| m + noise.sample(rng)).collect();
        (y1, y2)
    } else {
        (m1, m2)
    };
    let ds1 = FunctionalDataset::with_ties("first", t1, y1, TiePolicy::Jitter)?.with_support(0.0, l)?;
    let ds2 = FunctionalDataset::with_ties("second", t2, y2, TiePolicy::Jitter)?.with_support(0.0, l)?;
    Ok((ds1, ds2))
}

/// The pair of Monte Carlo run `run` under `spec.seed`.
pub fn run_pair(spec: &SimSpec, run: usize) -> Result<(FunctionalDataset, FunctionalDataset)> {
    generate_pair(spec, &mut stream(spec.seed, run as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Nadaraya-Watson on the first sample alone.
    FirstOnly,
    /// Pooled with the estimated warp.
    Plugin,
    /// Pooled with the true warp.
    Oracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::FirstOnly, EstimatorKind::Plugin, EstimatorKind::Oracle];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::FirstOnly => "m_nw",
            EstimatorKind::Plugin => "m_plugin",
            EstimatorKind::Oracle => "m_oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub runs: usize,
    /// Use one bandwidth for every run instead of cross-validating per run.
    pub frozen_bandwidth: Option<f64>,
    /// Replace the estimated warp by the true one (plug-in equals oracle).
    pub oracle_registration: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 1000,
            frozen_bandwidth: None,
            oracle_registration: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub estimator: EstimatorKind,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
    pub mse: Vec<f64>,
    pub imse: f64,
    pub mean_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    /// Grid points that were estimable in every successful run.
    pub valid: Vec<bool>,
    pub estimators: Vec<EstimatorStats>,
    pub runs: usize,
    pub failed_runs: usize,
}

impl SimulationReport {
    pub fn stats(&self, kind: EstimatorKind) -> &EstimatorStats {
        self.estimators
            .iter()
            .find(|s| s.estimator == kind)
            .expect("every estimator is reported")
    }
}

/// Estimates of one run on the grid, `None` where not estimable.
struct RunOutcome {
    curves: [Vec<Option<f64>>; 3],
    bandwidths: [f64; 3],
}

fn eval_on(fit: &PooledFit, grid: &[f64]) -> Vec<Option<f64>> {
    grid.iter().map(|&t| fit.eval(t).0).collect()
}

fn one_run(
    spec: &SimSpec,
    run: usize,
    grid: &[f64],
    mc: &MonteCarloConfig,
    est_cfg: &EstimateConfig,
    reg_cfg: &RegistrationConfig,
) -> Result<RunOutcome> {
    let (ds1, ds2) = run_pair(spec, run)?;
    let cfg = match mc.frozen_bandwidth {
        Some(h) => est_cfg.with_bandwidth(h),
        None => EstimateConfig {
            bandwidth: Bandwidth::Auto,
            ..est_cfg.clone()
        },
    };
    let first = PooledFit::new(&ds1, None, &Identity, &cfg)?;
    let oracle = PooledFit::new(&ds1, Some(&ds2), &spec.warp, &cfg)?;
    let plugin = if mc.oracle_registration {
        oracle.clone()
    } else {
        let reg = register(&ds1, &ds2, reg_cfg)?;
        PooledFit::new(&ds1, Some(&ds2), &reg.warp, &cfg)?
    };
    Ok(RunOutcome {
        curves: [eval_on(&first, grid), eval_on(&plugin, grid), eval_on(&oracle, grid)],
        bandwidths: [first.bandwidth(), plugin.bandwidth(), oracle.bandwidth()],
    })
}

/// Runs `mc.runs` independent simulations and reports pointwise bias, SD and
/// MSE of the three estimators against the true mean, plus trapezoid IMSE
/// over the grid points valid in all runs. SDs use the `1/R` normalization so
/// that `mse = bias^2 + sd^2`.
pub fn monte_carlo(
    spec: &SimSpec,
    mc: &MonteCarloConfig,
    est_cfg: &EstimateConfig,
    reg_cfg: &RegistrationConfig,
) -> Result<SimulationReport> {
    spec.validate()?;
    if mc.runs < 2 {
        return Err(Error::InvalidConfig("runs must be at least 2".into()));
    }
    let grid = match &est_cfg.grid {
        GridSpec::Explicit(g) => g.clone(),
        GridSpec::Interior { .. } => spec.imse_grid(),
    };
    let truth: Vec<f64> = grid.iter().map(|&t| spec.mean.eval(t)).collect();

    let outcomes: Vec<Result<RunOutcome>> = (0..mc.runs)
        .into_par_iter()
        .map(|run| one_run(spec, run, &grid, mc, est_cfg, reg_cfg))
        .collect();
    let total = outcomes.len();
    let ok: Vec<RunOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failed = total - ok.len();
    if failed as f64 > MAX_RUN_FAILURE_FRAC * total as f64 || ok.len() < 2 {
        return Err(Error::ReplicateFailure { failed, total });
    }

    let valid: Vec<bool> = (0..grid.len())
        .map(|p| ok.iter().all(|o| o.curves.iter().all(|c| c[p].is_some())))
        .collect();
    let r = ok.len() as f64;

    let mut estimators = Vec::with_capacity(3);
    for (e, kind) in EstimatorKind::ALL.into_iter().enumerate() {
        let mut bias = vec![f64::NAN; grid.len()];
        let mut sd = vec![f64::NAN; grid.len()];
        let mut mse = vec![f64::NAN; grid.len()];
        for p in (0..grid.len()).filter(|&p| valid[p]) {
            let xs: Vec<f64> = ok.iter().map(|o| o.curves[e][p].unwrap_or(f64::NAN)).collect();
            let mean = compensated_sum(xs.iter().copied()) / r;
            bias[p] = mean - truth[p];
            sd[p] = (compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / r).sqrt();
            mse[p] = compensated_sum(xs.iter().map(|x| (x - truth[p]).powi(2))) / r;
        }
        let (gx, gy): (Vec<f64>, Vec<f64>) = (0..grid.len())
            .filter(|&p| valid[p])
            .map(|p| (grid[p], mse[p]))
            .unzip();
        estimators.push(EstimatorStats {
            estimator: kind,
            bias,
            sd,
            mse,
            imse: trapezoid(&gx, &gy),
            mean_bandwidth: compensated_sum(ok.iter().map(|o| o.bandwidths[e])) / r,
        });
    }

    Ok(SimulationReport {
        grid,
        truth,
        valid,
        estimators,
        runs: ok.len(),
        failed_runs: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sample_sd;

    #[test]
    fn true_warp_values() {
        assert_eq!(true_warp_sim(0.0), 0.0);
        assert!((true_warp_sim(415.0) - 415.0).abs() < 1e-12);
        assert!((true_warp_sim(51.875) - 54.46875).abs() < 1e-12);
    }

    #[test]
    fn sine_warp_derivative_matches_differences() {
        let w = SineWarp::default();
        for &t in &[1.0, 50.0, 200.0, 363.0] {
            let fd = (w.apply(t + 1e-5) - w.apply(t - 1e-5)) / 2e-5;
            assert!((fd - w.derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn f2_inverse_cdf() {
        let f = LinearDensity::default();
        assert_eq!(f.inverse_cdf(1.0), 415.0);
        assert_eq!(f.inverse_cdf(0.0), 0.0);
        let median = f.inverse_cdf(0.5);
        // Positive root of t^2 + 415 t = 172225.
        let oracle = (-415.0 + (415.0f64.powi(2) + 4.0 * 172225.0).sqrt()) / 2.0;
        assert!((median - oracle).abs() < 1e-9);
        assert!((median - 256.48).abs() < 0.01);
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert!((f.cdf(f.inverse_cdf(u)) - u).abs() < 1e-12);
        }
        let flat = LinearDensity { tilt: 0.0, length: 2.0 };
        assert_eq!(flat.inverse_cdf(0.25), 0.5);
    }

    #[test]
    fn f2_integrates_to_one() {
        let f = LinearDensity::default();
        let x: Vec<f64> = (0..=1000).map(|i| 415.0 * i as f64 / 1000.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| f.pdf(t)).collect();
        assert!((trapezoid(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f2_sampler_passes_ks() {
        let f = LinearDensity::default();
        let mut rng = stream(99, 0);
        let mut xs: Vec<f64> = (0..10_000).map(|_| f.inverse_cdf(rng.random())).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = f.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic critical value at alpha = 0.01.
        assert!(d < 1.628 / n.sqrt(), "KS distance {d}");
    }

    #[test]
    fn builtin_mean_follows_nodes_away_from_corners() {
        for w in BUILTIN_NODES.windows(2) {
            let (t0, y0) = w[0];
            let (t1, y1) = w[1];
            let mid = 0.5 * (t0 + t1);
            assert!((builtin_mean(mid) - 0.5 * (y0 + y1)).abs() < 1e-4);
        }
        // Each corner is rounded by about s * phi(0) times the slope change.
        let corner = builtin_mean(95.0);
        assert!(corner < 270.0 && corner > 265.0, "{corner}");
    }

    #[test]
    fn builtin_mean_has_glacial_range() {
        let ts: Vec<f64> = (0..=4150).map(|i| i as f64 / 10.0).collect();
        let ms: Vec<f64> = ts.iter().map(|&t| MeanFunction::Builtin.eval(t)).collect();
        let range = ms.iter().cloned().fold(f64::MIN, f64::max) - ms.iter().cloned().fold(f64::MAX, f64::min);
        assert!((70.0..=130.0).contains(&range), "range {range}");
    }

    #[test]
    fn tabulated_mean_interpolates() {
        let m = MeanFunction::Tabulated {
            times: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 2.0, 0.0],
        };
        assert_eq!(m.eval(-1.0), 0.0);
        assert_eq!(m.eval(0.5), 1.0);
        assert_eq!(m.eval(2.0), 1.0);
        assert_eq!(m.eval(9.0), 0.0);
    }

    #[test]
    fn noiseless_pair_is_exact() {
        let spec = SimSpec {
            n1: 50,
            n2: 40,
            noise_frac: 0.0,
            ..SimSpec::default()
        };
        let (ds1, ds2) = run_pair(&spec, 3).unwrap();
        assert_eq!((ds1.len(), ds2.len()), (50, 40));
        for (t, y) in ds1.times().iter().zip(ds1.values()) {
            assert_eq!(*y, spec.mean.eval(*t));
        }
        for (s, y) in ds2.times().iter().zip(ds2.values()) {
            assert_eq!(*y, spec.mean.eval(true_warp_sim(*s)));
        }
    }

    #[test]
    fn noise_sd_follows_recipe() {
        let spec = SimSpec {
            n1: 4000,
            n2: 4000,
            noise_frac: 0.1,
            ..SimSpec::default()
        };
        let (ds1, ds2) = run_pair(&spec, 0).unwrap();
        let m1: Vec<f64> = ds1.times().iter().map(|&t| spec.mean.eval(t)).collect();
        let target = 0.1 * sample_sd(&m1);
        let r1: Vec<f64> = ds1.values().iter().zip(&m1).map(|(y, m)| y - m).collect();
        let r2: Vec<f64> = ds2
            .times()
            .iter()
            .zip(ds2.values())
            .map(|(&s, y)| y - spec.mean.eval(true_warp_sim(s)))
            .collect();
        assert!((sample_sd(&r1) / target - 1.0).abs() < 0.05);
        assert!((sample_sd(&r2) / target - 1.0).abs() < 0.05);
    }

    fn small_mc(mc: MonteCarloConfig) -> SimulationReport {
        let spec = SimSpec {
            n1: 60,
            n2: 60,
            seed: 5,
            ..SimSpec::default()
        };
        let est = EstimateConfig::default();
        let reg = RegistrationConfig {
            knots: 6,
            rounds: 2,
            ..RegistrationConfig::default()
        };
        monte_carlo(&spec, &mc, &est, &reg).unwrap()
    }

    #[test]
    fn mse_decomposes() {
        let rep = small_mc(MonteCarloConfig {
            runs: 6,
            frozen_bandwidth: Some(8.0),
            oracle_registration: false,
        });
        assert_eq!(rep.runs, 6);
        for s in &rep.estimators {
            for p in 0..rep.grid.len() {
                if !rep.valid[p] {
                    continue;
                }
                let lhs = s.mse[p];
                let rhs = s.bias[p].powi(2) + s.sd[p].powi(2);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300), "{lhs} vs {rhs}");
            }
            assert!(s.imse >= 0.0);
        }
    }

    #[test]
    fn oracle_registration_makes_plugin_equal_oracle() {
        let rep = small_mc(MonteCarloConfig {
            runs: 4,
            frozen_bandwidth: Some(8.0),
            oracle_registration: true,
        });
        let p = rep.stats(EstimatorKind::Plugin);
        let o = rep.stats(EstimatorKind::Oracle);
        assert_eq!(p.imse, o.imse);
        for i in 0..rep.grid.len() {
            assert_eq!(p.mse[i].to_bits(), o.mse[i].to_bits());
        }
    }

    #[test]
    fn report_is_deterministic_across_thread_counts() {
        let mc = MonteCarloConfig {
            runs: 5,
            frozen_bandwidth: None,
            oracle_registration: false,
        };
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| small_mc(mc.clone()));
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| small_mc(mc.clone()));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn rejects_too_few_runs() {
        let spec = SimSpec::default();
        let mc = MonteCarloConfig {
            runs: 1,
            ..MonteCarloConfig::default()
        };
        assert!(monte_carlo(&spec, &mc, &EstimateConfig::default(), &RegistrationConfig::default()).is_err());
    }
}
