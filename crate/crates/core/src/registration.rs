//! Kernel-matched registration of the second dataset onto the first one's
//! time scale, by sequential grid search over piecewise-linear warps.

use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::error::{Error, Result};
use crate::kernels::{bandwidth_rules, Bandwidth, Kernel};
use crate::warp::{PiecewiseLinearWarp, TimeWarp};

/// Denominators below this mean the warped points see no first-sample times.
pub const MIN_TIME_MASS: f64 = 1e-300;

/// Default search half-width in units of `(d - c) / knots`.
pub const DEFAULT_WINDOW_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub knots: usize,
    pub rounds: usize,
    /// Left-to-right sweeps per round before the window shrinks.
    pub sweeps_per_round: usize,
    /// Half-width of the per-knot search grid; `None` means
    /// [`DEFAULT_WINDOW_FACTOR`] times the second support length over the knot count.
    pub window: Option<f64>,
    pub steps: usize,
    pub refinement: f64,
    pub time_bandwidth: Bandwidth,
    pub value_bandwidth: Bandwidth,
    pub time_kernel: Kernel,
    pub value_kernel: Kernel,
    /// Stop once a round improves the criterion by less than this relative amount.
    pub early_stop: Option<f64>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            knots: 30,
            rounds: 5,
            sweeps_per_round: 2,
            window: None,
            steps: 15,
            refinement: 0.5,
            time_bandwidth: Bandwidth::Auto,
            value_bandwidth: Bandwidth::Auto,
            time_kernel: Kernel::Gaussian,
            value_kernel: Kernel::Gaussian,
            early_stop: None,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 2 {
            return Err(Error::InvalidConfig("knots must be at least 2".into()));
        }
        if self.rounds == 0 || self.sweeps_per_round == 0 {
            return Err(Error::InvalidConfig("rounds and sweeps must be at least 1".into()));
        }
        if let Some(w) = self.window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("window must be positive, got {w}")));
            }
        }
        if !(self.refinement > 0.0 && self.refinement < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "refinement must lie in (0, 1), got {}",
                self.refinement
            )));
        }
        for b in [self.time_bandwidth, self.value_bandwidth] {
            if let Bandwidth::Fixed(h) = b {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidBandwidth(format!("{h}")));
                }
            }
        }
        self.time_kernel.validate()?;
        self.value_kernel.validate()
    }

    /// Resolves `(h_t, h_y)`, filling automatic values from the bandwidth rules.
    pub fn resolve_bandwidths(
        &self,
        ds1: &FunctionalDataset,
        ds2: &FunctionalDataset,
    ) -> Result<(f64, f64)> {
        match (self.time_bandwidth, self.value_bandwidth) {
            (Bandwidth::Fixed(ht), Bandwidth::Fixed(hy)) => Ok((ht, hy)),
            (ht, hy) => {
                let (auto_t, auto_y) = bandwidth_rules(ds1, ds2)?;
                Ok((ht.fixed().unwrap_or(auto_t), hy.fixed().unwrap_or(auto_y)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub warp: PiecewiseLinearWarp,
    pub initial_criterion: f64,
    /// Best criterion value after each round.
    pub criterion_trace: Vec<f64>,
    pub evaluations: usize,
    pub time_bandwidth: f64,
    pub value_bandwidth: f64,
}

/// Evaluates per-observation pieces of the kernel-matched criterion.
struct Objective<'a> {
    t1: &'a [f64],
    y1: &'a [f64],
    y2: &'a [f64],
    ht: f64,
    hy: f64,
    k1: Kernel,
    k2: Kernel,
}

impl<'a> Objective<'a> {
    fn new(
        ds1: &'a FunctionalDataset,
        ds2: &'a FunctionalDataset,
        ht: f64,
        hy: f64,
        k1: Kernel,
        k2: Kernel,
    ) -> Result<Self> {
        for (name, h) in [("h_t", ht), ("h_y", hy)] {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidBandwidth(format!("{name} = {h}")));
            }
        }
        k1.validate()?;
        k2.validate()?;
        Ok(Self {
            t1: ds1.times(),
            y1: ds1.values(),
            y2: ds2.values(),
            ht,
            hy,
            k1,
            k2,
        })
    }

    /// `(numerator, denominator)` contribution of second-sample point `j`
    /// placed at warped time `g`.
    fn piece(&self, j: usize, g: f64) -> (f64, f64) {
        let r = self.k1.effective_radius() * self.ht;
        let lo = self.t1.partition_point(|&t| t < g - r);
        let hi = self.t1.partition_point(|&t| t <= g + r);
        let (mut num, mut den) = (0.0, 0.0);
        for i in lo..hi {
            let wt = self.k1.eval((self.t1[i] - g) / self.ht) / self.ht;
            if wt == 0.0 {
                continue;
            }
            den += wt;
            num += wt * self.k2.eval((self.y1[i] - self.y2[j]) / self.hy) / self.hy;
        }
        (num, den)
    }

    fn ratio(num: &[f64], den: &[f64]) -> Option<f64> {
        let n: f64 = num.iter().sum();
        let d: f64 = den.iter().sum();
        (d >= MIN_TIME_MASS).then(|| n / d)
    }
}

/// The kernel-matched criterion at warp `w`: the double sum of time-kernel
/// times value-kernel weights over the double sum of time-kernel weights.
pub fn km_criterion(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    w: &dyn TimeWarp,
    ht: f64,
    hy: f64,
    k1: &Kernel,
    k2: &Kernel,
) -> Result<f64> {
    let obj = Objective::new(ds1, ds2, ht, hy, *k1, *k2)?;
    let (num, den): (Vec<f64>, Vec<f64>) = ds2
        .times()
        .iter()
        .enumerate()
        .map(|(j, &s)| obj.piece(j, w.apply(s)))
        .unzip();
    Objective::ratio(&num, &den).ok_or(Error::ZeroTimeMass)
}

/// Candidate values for one knot: a symmetric grid of `steps` points.
fn candidate_grid(center: f64, half_width: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![center],
        _ => (0..steps)
            .map(|i| {
                let u = -1.0 + 2.0 * i as f64 / (steps - 1) as f64;
                if u == 0.0 {
                    center
                } else {
                    center + half_width * u
                }
            })
            .collect(),
    }
}

/// Maximizes the kernel-matched criterion over strictly increasing
/// piecewise-linear warps on equidistant knots spanning the second dataset's
/// support, starting from the identity.
///
/// Each round sweeps the knots left to right; each knot value is replaced by
/// the best admissible point of a symmetric grid around it, but only when
/// that strictly improves the criterion. Equal best candidates resolve to the
/// smallest value. The window shrinks by `refinement` after every round.
pub fn register(
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    for ds in [ds1, ds2] {
        if ds.len() < 2 {
            return Err(Error::InsufficientPoints {
                needed: 2,
                got: ds.len(),
            });
        }
    }
    let (ht, hy) = cfg.resolve_bandwidths(ds1, ds2)?;
    let obj = Objective::new(ds1, ds2, ht, hy, cfg.time_kernel, cfg.value_kernel)?;

    let (c, d) = ds2.support();
    let mut warp = PiecewiseLinearWarp::identity(c, d, cfg.knots)?;
    let s = ds2.times();
    let n2 = s.len();

    let mut num = vec![0.0; n2];
    let mut den = vec![0.0; n2];
    for j in 0..n2 {
        (num[j], den[j]) = obj.piece(j, warp.eval(s[j]));
    }
    let initial = Objective::ratio(&num, &den).ok_or(Error::ZeroTimeMass)?;
    let mut current = initial;
    let mut evaluations = 1;

    let mut window = cfg.window.unwrap_or(DEFAULT_WINDOW_FACTOR * (d - c) / cfg.knots as f64);
    let mut trace = Vec::with_capacity(cfg.rounds);
    let knots = warp.knots().to_vec();

    let mut cand_num = num.clone();
    let mut cand_den = den.clone();

    for _round in 0..cfg.rounds {
        let start_of_round = current;
        for _sweep in 0..cfg.sweeps_per_round {
            // A sweep that moves nothing would repeat itself exactly.
            let mut moved = false;
            for k in 0..cfg.knots {
                let left = if k == 0 { f64::NEG_INFINITY } else { knots[k - 1] };
                let right = if k + 1 == cfg.knots { f64::INFINITY } else { knots[k + 1] };
                let affected = s.partition_point(|&x| x < left)..s.partition_point(|&x| x <= right);

                let original = warp.values()[k];
                let mut admissible = 0;
                let mut best: Option<(f64, f64)> = None;
                for v in candidate_grid(original, window, cfg.steps) {
                    if !warp.admits(k, v) {
                        continue;
                    }
                    admissible += 1;
                    warp.set_value_unchecked(k, v);
                    for j in affected.clone() {
                        (cand_num[j], cand_den[j]) = obj.piece(j, warp.eval(s[j]));
                    }
                    evaluations += 1;
                    let score = Objective::ratio(&cand_num, &cand_den);
                    for j in affected.clone() {
                        cand_num[j] = num[j];
                        cand_den[j] = den[j];
                    }
                    let Some(score) = score else { continue };
                    best = match best {
                        Some((bv, bs)) if bs > score || (bs == score && bv <= v) => Some((bv, bs)),
                        _ => Some((v, score)),
                    };
                }
                if admissible == 0 {
                    return Err(Error::NoAdmissibleCandidate { knot: k });
                }
                match best {
                    Some((v, score)) if score > current => {
                        warp.set_value_unchecked(k, v);
                        for j in affected {
                            (num[j], den[j]) = obj.piece(j, warp.eval(s[j]));
                            cand_num[j] = num[j];
                            cand_den[j] = den[j];
                        }
                        current = score;
                        moved = true;
                    }
                    _ => warp.set_value_unchecked(k, original),
                }
            }
            if !moved {
                break;
            }
        }
        trace.push(current);
        window *= cfg.refinement;
        if let Some(tol) = cfg.early_stop {
            if current - start_of_round < tol * start_of_round.abs() {
                break;
            }
        }
    }

    Ok(RegistrationResult {
        warp: warp.with_label("registered"),
        initial_criterion: initial,
        criterion_trace: trace,
        evaluations,
        time_bandwidth: ht,
        value_bandwidth: hy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::Identity;
    use std::f64::consts::PI;

    fn ds(t: &[f64], y: &[f64]) -> FunctionalDataset {
        FunctionalDataset::new("d", t.to_vec(), y.to_vec()).unwrap()
    }

    fn phi(u: f64) -> f64 {
        (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
    }

    /// Direct double loop over all pairs.
    fn brute(a: &FunctionalDataset, b: &FunctionalDataset, g: &dyn TimeWarp, ht: f64, hy: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (&t, &y1) in a.times().iter().zip(a.values()) {
            for (&s, &y2) in b.times().iter().zip(b.values()) {
                let wt = phi((t - g.apply(s)) / ht) / ht;
                den += wt;
                num += wt * phi((y1 - y2) / hy) / hy;
            }
        }
        num / den
    }

    #[test]
    fn single_point_criterion() {
        let a = ds(&[0.0], &[0.0]);
        let v = km_criterion(&a, &a, &Identity, 1.0, 1.0, &Kernel::Gaussian, &Kernel::Gaussian)
            .unwrap();
        assert!((v - 0.398_942_3).abs() < 1e-7);
    }

    #[test]
    fn criterion_matches_brute_force() {
        let a = ds(&[0.0, 1.3], &[0.5, -1.0]);
        let b = ds(&[0.2, 1.0], &[0.4, 2.0]);
        let w = PiecewiseLinearWarp::new(vec![0.2, 1.0], vec![0.1, 1.4]).unwrap();
        for (ht, hy) in [(0.5, 0.7), (1.0, 1.0), (0.2, 3.0)] {
            let got =
                km_criterion(&a, &b, &w, ht, hy, &Kernel::Gaussian, &Kernel::Gaussian).unwrap();
            assert!((got - brute(&a, &b, &w, ht, hy)).abs() < 1e-12);
        }
    }

    #[test]
    fn criterion_invariant_to_common_value_shift() {
        let a = ds(&[0.0, 1.0, 2.0, 3.0], &[1.0, 4.0, 2.0, 8.0]);
        let b = ds(&[0.5, 1.5, 2.5], &[3.0, 1.0, 7.0]);
        let k = Kernel::Gaussian;
        let v0 = km_criterion(&a, &b, &Identity, 0.8, 2.0, &k, &k).unwrap();
        let v1 = km_criterion(&a.shifted(1024.0), &b.shifted(1024.0), &Identity, 0.8, 2.0, &k, &k)
            .unwrap();
        assert_eq!(v0, v1);
    }

    #[test]
    fn zero_time_mass_is_reported() {
        let a = ds(&[0.0, 1.0], &[0.0, 1.0]);
        let b = ds(&[100.0, 101.0], &[0.0, 1.0]);
        let k = Kernel::truncated(3.0).unwrap();
        assert!(matches!(
            km_criterion(&a, &b, &Identity, 1.0, 1.0, &k, &k),
            Err(Error::ZeroTimeMass)
        ));
    }

    fn wavy(n: usize, shift: impl Fn(f64) -> f64) -> FunctionalDataset {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 100.0 / (n - 1) as f64).collect();
        let y = t.iter().map(|&x| (shift(x) / 8.0).sin() * 10.0).collect();
        FunctionalDataset::new("w", t, y).unwrap()
    }

    #[test]
    fn identical_data_keeps_identity() {
        let a = wavy(60, |x| x);
        let cfg = RegistrationConfig {
            knots: 6,
            rounds: 1,
            ..Default::default()
        };
        let res = register(&a, &a, &cfg).unwrap();
        let id = PiecewiseLinearWarp::identity(0.0, 100.0, 6).unwrap();
        assert_eq!(res.warp.values(), id.values());

        // exhaustive: no single-knot perturbation from the candidate grid beats identity
        let (ht, hy) = (res.time_bandwidth, res.value_bandwidth);
        let k = Kernel::Gaussian;
        let base = km_criterion(&a, &a, &id, ht, hy, &k, &k).unwrap();
        let half = 100.0 / 6.0;
        for knot in 0..6 {
            for v in candidate_grid(id.values()[knot], half, 11) {
                if let Ok(w) = id.with_value(knot, v) {
                    let c = km_criterion(&a, &a, &w, ht, hy, &k, &k).unwrap();
                    assert!(base >= c, "knot {knot} value {v}: {c} > {base}");
                }
            }
        }
    }

    #[test]
    fn zero_steps_has_no_candidate() {
        let a = wavy(20, |x| x);
        let cfg = RegistrationConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(matches!(
            register(&a, &a, &cfg),
            Err(Error::NoAdmissibleCandidate { knot: 0 })
        ));
    }

    #[test]
    fn oversized_even_grid_has_no_candidate() {
        let a = wavy(20, |x| x);
        let cfg = RegistrationConfig {
            knots: 5,
            steps: 2,
            window: Some(1000.0),
            ..Default::default()
        };
        // knot 1 is boxed in by its neighbours
        assert!(matches!(
            register(&a, &a, &cfg),
            Err(Error::NoAdmissibleCandidate { knot: 1 })
        ));
    }

    #[test]
    fn recovers_a_shift_and_trace_is_monotone() {
        let a = wavy(200, |x| x);
        // second set's clock runs 4 units behind: its t maps to t + 4
        let b = wavy(150, |x| x + 4.0);
        let cfg = RegistrationConfig {
            knots: 8,
            ..Default::default()
        };
        let res = register(&a, &b, &cfg).unwrap();
        assert!(res.criterion_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.criterion_trace[0] >= res.initial_criterion);
        let truth = |t: f64| t + 4.0;
        let err = crate::warp::sup_distance(&res.warp, &truth, (10.0, 90.0), 0);
        assert!(err < 1.5, "sup error {err}");
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = wavy(80, |x| x);
        let b = wavy(70, |x| x + 2.0);
        let mut t: Vec<f64> = b.times().to_vec();
        let mut y: Vec<f64> = b.values().to_vec();
        t.reverse();
        y.reverse();
        let b2 = FunctionalDataset::new("b", t, y).unwrap();
        let cfg = RegistrationConfig {
            knots: 5,
            rounds: 2,
            ..Default::default()
        };
        assert_eq!(register(&a, &b, &cfg).unwrap().warp, register(&a, &b2, &cfg).unwrap().warp);
    }

    #[test]
    fn invalid_configs() {
        let a = wavy(20, |x| x);
        for cfg in [
            RegistrationConfig { knots: 1, ..Default::default() },
            RegistrationConfig { rounds: 0, ..Default::default() },
            RegistrationConfig { refinement: 1.0, ..Default::default() },
            RegistrationConfig { window: Some(-1.0), ..Default::default() },
        ] {
            assert!(matches!(register(&a, &a, &cfg), Err(Error::InvalidConfig(_))));
        }
        let one = ds(&[1.0], &[1.0]);
        assert!(matches!(
            register(&a, &one, &RegistrationConfig::default()),
            Err(Error::InsufficientPoints { .. })
        ));
    }
}
