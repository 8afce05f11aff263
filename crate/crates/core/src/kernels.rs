//! Kernel functions, bandwidth rules, leave-one-out bandwidth selection and
//! smoothed resampling from kernel density estimates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Beyond this many standard deviations `exp(-u^2/2)/sqrt(2 pi)` underflows to
/// exactly zero in f64, so windowing at this radius does not change any sum.
const GAUSSIAN_ZERO_RADIUS: f64 = 39.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Kernel {
    Gaussian,
    /// Standard normal density set to zero for `|u| > cutoff`. Not renormalized.
    GaussianTruncated { cutoff: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Gaussian
    }
}

impl Kernel {
    pub fn truncated(cutoff: f64) -> Result<Self> {
        let k = Kernel::GaussianTruncated { cutoff };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian => Ok(()),
            Kernel::GaussianTruncated { cutoff } if cutoff > 0.0 && cutoff.is_finite() => Ok(()),
            Kernel::GaussianTruncated { cutoff } => Err(Error::InvalidKernel(format!(
                "truncation cutoff must be positive, got {cutoff}"
            ))),
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::GaussianTruncated { cutoff } => {
                if u.abs() > cutoff {
                    0.0
                } else {
                    INV_SQRT_2PI * (-0.5 * u * u).exp()
                }
            }
        }
    }

    /// Radius (in bandwidth units) outside which the kernel evaluates to 0.
    pub fn effective_radius(&self) -> f64 {
        match *self {
            Kernel::Gaussian => GAUSSIAN_ZERO_RADIUS,
            Kernel::GaussianTruncated { cutoff } => cutoff.min(GAUSSIAN_ZERO_RADIUS),
        }
    }

    /// `||K||_2^2` and `mu_2(K)`.
    pub fn constants(&self) -> KernelConstants {
        match *self {
            Kernel::Gaussian => KernelConstants {
                k_l2: 1.0 / (2.0 * PI.sqrt()),
                mu2: 1.0,
            },
            Kernel::GaussianTruncated { cutoff: c } => {
                let erf = statrs::function::erf::erf;
                // int_{-c}^{c} phi^2 = erf(c) / (2 sqrt(pi))
                let k_l2 = erf(c) / (2.0 * PI.sqrt());
                // int_{-c}^{c} s^2 phi = erf(c/sqrt2) - 2 c phi(c)
                let mu2 = erf(c / 2f64.sqrt()) - 2.0 * c * INV_SQRT_2PI * (-0.5 * c * c).exp();
                KernelConstants { k_l2, mu2 }
            }
        }
    }

    /// Draws one standardized variate with this kernel as its density.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            match *self {
                Kernel::Gaussian => return z,
                Kernel::GaussianTruncated { cutoff } if z.abs() <= cutoff => return z,
                Kernel::GaussianTruncated { .. } => continue,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub k_l2: f64,
    pub mu2: f64,
}

/// A bandwidth that is either fixed or resolved from the data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    pub fn fixed(&self) -> Option<f64> {
        match *self {
            Bandwidth::Fixed(h) => Some(h),
            Bandwidth::Auto => None,
        }
    }
}

fn check_bandwidth(h: f64) -> Result<f64> {
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::InvalidBandwidth(format!("{h} is not a positive finite number")))
    }
}

fn mean_gap(times: &[f64]) -> f64 {
    (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
}

/// Time and value bandwidths of the kernel-matched registration criterion.
///
/// `h_t` is half the mean gap between successive times of the dataset with
/// fewer points per unit time; `h_y` is a tenth of the pooled y-range.
pub fn bandwidth_rules(ds1: &FunctionalDataset, ds2: &FunctionalDataset) -> Result<(f64, f64)> {
    let hy = value_bandwidth(ds1, ds2)?;
    let ht = time_bandwidth(ds1, ds2)?;
    Ok((ht, hy))
}

pub fn time_bandwidth(ds1: &FunctionalDataset, ds2: &FunctionalDataset) -> Result<f64> {
    let sparse = if ds2.density() <= ds1.density() { ds2 } else { ds1 };
    if sparse.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: sparse.len(),
        });
    }
    check_bandwidth(0.5 * mean_gap(sparse.times())).map_err(|_| Error::DegenerateRange)
}

pub fn value_bandwidth(ds1: &FunctionalDataset, ds2: &FunctionalDataset) -> Result<f64> {
    let (lo1, hi1) = ds1.y_range();
    let (lo2, hi2) = ds2.y_range();
    let range = hi1.max(hi2) - lo1.min(lo2);
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    Ok(0.10 * range)
}

/// A time-sorted sample used for Nadaraya-Watson style local averaging.
///
/// Weighted averages are computed as deviations from `reference` (the first
/// value), which makes the average of a constant sample exact.
#[derive(Debug, Clone)]
pub struct SmoothingSample {
    times: Vec<f64>,
    values: Vec<f64>,
    reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSums {
    /// `sum_i K((t - t_i)/h)`
    pub weight: f64,
    /// `sum_i K((t - t_i)/h) (y_i - reference)`
    pub weighted_dev: f64,
}

impl SmoothingSample {
    pub fn new(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let reference = pairs.first().map_or(0.0, |p| p.1);
        let (times, values) = pairs.into_iter().unzip();
        Self {
            times,
            values,
            reference,
        }
    }

    pub fn from_dataset(ds: &FunctionalDataset) -> Self {
        Self {
            times: ds.times().to_vec(),
            values: ds.values().to_vec(),
            reference: ds.values()[0],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Index range of observations within `radius` of `t`.
    pub fn window(&self, t: f64, radius: f64) -> std::ops::Range<usize> {
        let lo = self.times.partition_point(|&x| x < t - radius);
        let hi = self.times.partition_point(|&x| x <= t + radius);
        lo..hi
    }

    pub fn local_sums(&self, t: f64, h: f64, kernel: &Kernel, skip: Option<usize>) -> LocalSums {
        let mut weight = 0.0;
        let mut weighted_dev = 0.0;
        for i in self.window(t, kernel.effective_radius() * h) {
            if Some(i) == skip {
                continue;
            }
            let w = kernel.eval((t - self.times[i]) / h);
            weight += w;
            weighted_dev += w * (self.values[i] - self.reference);
        }
        LocalSums {
            weight,
            weighted_dev,
        }
    }

    /// Nadaraya-Watson estimate at `t`, or `None` without kernel mass.
    pub fn predict(&self, t: f64, h: f64, kernel: &Kernel, skip: Option<usize>) -> Option<f64> {
        let s = self.local_sums(t, h, kernel, skip);
        (s.weight > 0.0).then(|| self.reference + s.weighted_dev / s.weight)
    }

    /// Sum of squared leave-one-out prediction errors, `None` if any point
    /// has no remaining kernel mass.
    pub fn loocv_sse(&self, h: f64, kernel: &Kernel) -> Option<f64> {
        let mut sse = 0.0;
        for i in 0..self.len() {
            let pred = self.predict(self.times[i], h, kernel, Some(i))?;
            let e = self.values[i] - pred;
            sse += e * e;
        }
        Some(sse)
    }
}

/// Picks the grid bandwidth minimizing the leave-one-out squared prediction
/// error; ties go to the largest bandwidth.
pub fn select_bandwidth_loocv(
    sample: &SmoothingSample,
    grid: &[f64],
    kernel: &Kernel,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidBandwidth("empty bandwidth grid".into()));
    }
    for &h in grid {
        check_bandwidth(h)?;
    }
    if sample.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: sample.len(),
        });
    }
    let scores: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&h| sample.loocv_sse(h, kernel))
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for (&h, score) in grid.iter().zip(scores) {
        let Some(score) = score else { continue };
        best = match best {
            None => Some((h, score)),
            Some((bh, bs)) if score < bs || (score == bs && h > bh) => Some((h, score)),
            keep => keep,
        };
    }
    best.map(|(h, _)| h).ok_or(Error::AllPredictionsUndefined)
}

/// Default candidate grid: 20 log-spaced values from 0.25x to 4x a pilot
/// bandwidth. The pilot is the geometric mean of the mean sampling gap and
/// the normal-reference density rule, which brackets the regression optimum
/// for samples from a few dozen to several thousand points.
pub fn default_bandwidth_grid(times: &[f64]) -> Result<Vec<f64>> {
    if times.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: times.len(),
        });
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gap = mean_gap(&sorted);
    let silverman = silverman_bandwidth(&sorted).ok_or(Error::DegenerateRange)?;
    let pilot = check_bandwidth((gap * silverman).sqrt()).map_err(|_| Error::DegenerateRange)?;
    Ok(log_spaced(0.25 * pilot, 4.0 * pilot, 20))
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `1.06 * sd * n^(-1/5)`, `None` for fewer than two points or zero spread.
pub fn silverman_bandwidth(sample: &[f64]) -> Option<f64> {
    if sample.len() < 2 {
        return None;
    }
    let h = 1.06 * sample_sd(sample) * (sample.len() as f64).powf(-0.2);
    (h > 0.0 && h.is_finite()).then_some(h)
}

/// Kernel density estimate used for smoothed bootstrap resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    sample: Vec<f64>,
    bandwidth: f64,
    kernel: Kernel,
}

impl DensityEstimate {
    /// Fits with the normal-reference bandwidth `1.06 * sd * n^(-1/5)`.
    pub fn fit(sample: &[f64], kernel: Kernel) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        let h = silverman_bandwidth(sample).ok_or(Error::DegenerateSample)?;
        Self::with_bandwidth(sample, h, kernel)
    }

    pub fn with_bandwidth(sample: &[f64], bandwidth: f64, kernel: Kernel) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        kernel.validate()?;
        Ok(Self {
            sample: sample.to_vec(),
            bandwidth: check_bandwidth(bandwidth)?,
            kernel,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_points(&self) -> &[f64] {
        &self.sample
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.sample
            .iter()
            .map(|&s| self.kernel.eval((x - s) / h))
            .sum::<f64>()
            / (self.sample.len() as f64 * h)
    }

    /// Draws `n` points: a uniformly chosen sample point plus scaled kernel noise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let base = self.sample[rng.random_range(0..self.sample.len())];
                base + self.bandwidth * self.kernel.sample_unit(rng)
            })
            .collect()
    }
}

pub fn kde_fit(sample: &[f64], kernel: Kernel) -> Result<DensityEstimate> {
    DensityEstimate::fit(sample, kernel)
}

pub fn kde_sample<R: Rng + ?Sized>(d: &DensityEstimate, rng: &mut R, n: usize) -> Vec<f64> {
    d.draw(rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_values() {
        assert_relative_eq!(Kernel::Gaussian.eval(0.0), 0.398_942_3, epsilon = 1e-7);
        let expected = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert_relative_eq!(Kernel::Gaussian.eval(1.0), expected, epsilon = 1e-15);
        assert_relative_eq!(Kernel::Gaussian.eval(1.0), 0.241_970_7, epsilon = 1e-7);
    }

    #[test]
    fn truncated_is_zero_beyond_cutoff() {
        let k = Kernel::truncated(8.0).unwrap();
        assert_eq!(k.eval(9.0), 0.0);
        assert_eq!(k.eval(-8.0001), 0.0);
        assert_eq!(k.eval(1.0), Kernel::Gaussian.eval(1.0));
        assert!(Kernel::truncated(0.0).is_err());
        assert!(Kernel::truncated(-1.0).is_err());
    }

    #[test]
    fn gaussian_zero_radius_is_exact() {
        assert_eq!(Kernel::Gaussian.eval(GAUSSIAN_ZERO_RADIUS), 0.0);
        assert!(Kernel::Gaussian.eval(38.0) > 0.0);
    }

    #[test]
    fn gaussian_integrates_to_one() {
        // Simpson on [-10, 10]
        let n = 20_000;
        let (a, b) = (-10.0, 10.0);
        let h = (b - a) / n as f64;
        let mut s = Kernel::Gaussian.eval(a) + Kernel::Gaussian.eval(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * Kernel::Gaussian.eval(a + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constants_match_quadrature() {
        let k = Kernel::truncated(1.5).unwrap();
        let n = 20_000;
        let h = 3.0 / n as f64;
        let (mut l2, mut mu2) = (0.0, 0.0);
        for i in 0..n {
            let u = -1.5 + (i as f64 + 0.5) * h;
            l2 += k.eval(u).powi(2) * h;
            mu2 += u * u * k.eval(u) * h;
        }
        let c = k.constants();
        assert_relative_eq!(c.k_l2, l2, epsilon = 1e-8);
        assert_relative_eq!(c.mu2, mu2, epsilon = 1e-8);
        let g = Kernel::Gaussian.constants();
        assert_relative_eq!(g.k_l2, 0.282_094_79, epsilon = 1e-8);
        assert_eq!(g.mu2, 1.0);
    }

    fn ds(t: &[f64], y: &[f64]) -> FunctionalDataset {
        FunctionalDataset::new("d", t.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn time_bandwidth_uses_lesser_dense_set() {
        let dense = ds(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
            &[0.0; 13]);
        let sparse = ds(&[0.0, 2.0, 4.0, 6.0], &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(time_bandwidth(&dense, &sparse).unwrap(), 1.0);
        assert_eq!(time_bandwidth(&sparse, &dense).unwrap(), 1.0);
    }

    #[test]
    fn value_bandwidth_from_table_ranges() {
        let a = ds(&[0.0, 1.0], &[183.8, 298.6]);
        let b = ds(&[0.0, 1.0], &[182.2, 298.7]);
        assert_relative_eq!(value_bandwidth(&a, &b).unwrap(), 0.1 * (298.7 - 182.2), epsilon = 1e-12);
        assert_relative_eq!(value_bandwidth(&a, &b).unwrap(), 11.65, epsilon = 1e-9);
    }

    #[test]
    fn identical_singletons_are_degenerate() {
        let a = ds(&[1.0], &[3.0]);
        assert!(matches!(bandwidth_rules(&a, &a), Err(Error::DegenerateRange)));
    }

    #[test]
    fn singleton_lesser_dense_is_insufficient() {
        let a = ds(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
        let b = ds(&[0.5], &[5.0]);
        // a zero-length support counts as infinitely dense, so `a` is picked
        assert!(time_bandwidth(&a, &b).is_ok());
        let c = ds(&[0.0, 100.0], &[0.0, 1.0]);
        let d = ds(&[0.0], &[1.0]).with_support(0.0, 1000.0).unwrap();
        assert!(matches!(
            time_bandwidth(&c, &d),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn loocv_constant_data_picks_largest() {
        let pairs: Vec<_> = (0..30).map(|i| (i as f64 * 0.37, 4.2)).collect();
        let s = SmoothingSample::new(pairs);
        let grid = [0.5, 1.0, 2.0, 4.0];
        assert_eq!(select_bandwidth_loocv(&s, &grid, &Kernel::Gaussian).unwrap(), 4.0);
    }

    #[test]
    fn loocv_singleton_grid() {
        let pairs: Vec<_> = (0..10).map(|i| (i as f64, (i as f64).sin())).collect();
        let s = SmoothingSample::new(pairs);
        assert_eq!(select_bandwidth_loocv(&s, &[0.7], &Kernel::Gaussian).unwrap(), 0.7);
    }

    #[test]
    fn loocv_errors() {
        let s = SmoothingSample::new(vec![(0.0, 1.0), (10.0, 2.0), (20.0, 3.0)]);
        let k = Kernel::truncated(1.0).unwrap();
        assert!(matches!(
            select_bandwidth_loocv(&s, &[0.5, 1.0], &k),
            Err(Error::AllPredictionsUndefined)
        ));
        assert!(select_bandwidth_loocv(&s, &[], &k).is_err());
        assert!(select_bandwidth_loocv(&s, &[-1.0], &k).is_err());
        let tiny = SmoothingSample::new(vec![(0.0, 1.0), (1.0, 2.0)]);
        assert!(matches!(
            select_bandwidth_loocv(&tiny, &[1.0], &k),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    /// Independent double-loop leave-one-out criterion.
    fn brute_cv(t: &[f64], y: &[f64], h: f64) -> f64 {
        let mut sse = 0.0;
        for i in 0..t.len() {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..t.len() {
                if i != j {
                    let u = (t[i] - t[j]) / h;
                    let w = (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
                    num += w * y[j];
                    den += w;
                }
            }
            sse += (y[i] - num / den).powi(2);
        }
        sse
    }

    #[test]
    fn loocv_sine_matches_brute_force_argmin() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 2.0 * PI / 199.0).collect();
        let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let grid = log_spaced(0.005, 2.0, 10);
        let curve: Vec<f64> = grid.iter().map(|&h| brute_cv(&t, &y, h)).collect();
        let argmin = curve
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let s = SmoothingSample::new(t.iter().copied().zip(y.iter().copied()).collect());
        for (h, c) in grid.iter().zip(&curve) {
            let got = s.loocv_sse(*h, &Kernel::Gaussian).unwrap();
            assert_relative_eq!(got, *c, max_relative = 1e-9);
        }
        assert_eq!(
            select_bandwidth_loocv(&s, &grid, &Kernel::Gaussian).unwrap(),
            grid[argmin]
        );
    }

    #[test]
    fn kde_draw_empty() {
        let d = DensityEstimate::with_bandwidth(&[0.0], 1.0, Kernel::Gaussian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(d.draw(&mut rng, 0).is_empty());
    }

    #[test]
    fn kde_draw_matches_smoothing_distribution() {
        let d = DensityEstimate::with_bandwidth(&[0.0], 1.0, Kernel::Gaussian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;
        let xs = d.draw(&mut rng, n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = sample_sd(&xs);
        let tol = 3.0 / (n as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean}");
        assert!((sd - 1.0).abs() < tol, "sd {sd}");
    }

    #[test]
    fn kde_fit_uses_normal_reference_rule() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.731).sin()).collect();
        let d = kde_fit(&xs, Kernel::Gaussian).unwrap();
        let expected = 1.06 * sample_sd(&xs) * 50f64.powf(-0.2);
        assert_eq!(d.bandwidth(), expected);
        assert!(matches!(
            kde_fit(&[2.0, 2.0, 2.0], Kernel::Gaussian),
            Err(Error::DegenerateSample)
        ));
    }

    #[test]
    fn kde_draw_is_reproducible_and_tie_free() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let d = kde_fit(&xs, Kernel::Gaussian).unwrap();
        let a = d.draw(&mut ChaCha8Rng::seed_from_u64(3), 500);
        let b = d.draw(&mut ChaCha8Rng::seed_from_u64(3), 500);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
    }

    proptest! {
        #[test]
        fn kernel_symmetry(u in -50.0f64..50.0, c in 0.1f64..20.0) {
            prop_assert_eq!(Kernel::Gaussian.eval(u), Kernel::Gaussian.eval(-u));
            let k = Kernel::GaussianTruncated { cutoff: c };
            prop_assert_eq!(k.eval(u), k.eval(-u));
            prop_assert!(k.eval(u) >= 0.0);
        }

        #[test]
        fn loocv_returns_grid_member(
            ys in proptest::collection::vec(-10.0f64..10.0, 5..25),
            grid in proptest::collection::vec(0.05f64..5.0, 1..6),
        ) {
            let pairs: Vec<_> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
            let s = SmoothingSample::new(pairs);
            let h = select_bandwidth_loocv(&s, &grid, &Kernel::Gaussian).unwrap();
            prop_assert!(grid.contains(&h));
        }
    }
}
