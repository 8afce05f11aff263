//! Strictly increasing piecewise-linear time warps on equidistant knots.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing map from the second dataset's time scale into the
/// first's. Implemented by estimated warps and by analytic true warps.
pub trait TimeWarp: Sync {
    fn apply(&self, t: f64) -> f64;

    /// Breakpoints where the map may have a kink; included in sup-distance grids.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl TimeWarp for Identity {
    fn apply(&self, t: f64) -> f64 {
        t
    }
}

impl<F: Fn(f64) -> f64 + Sync> TimeWarp for F {
    fn apply(&self, t: f64) -> f64 {
        self(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearWarp {
    knots: Vec<f64>,
    values: Vec<f64>,
    label: String,
}

const KNOT_SPACING_TOL: f64 = 1e-9;

impl PiecewiseLinearWarp {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidWarp(format!(
                "need at least 2 knots, got {}",
                knots.len()
            )));
        }
        if knots.len() != values.len() {
            return Err(Error::InvalidWarp(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidWarp("non-finite knot or value".into()));
        }
        let span = knots[knots.len() - 1] - knots[0];
        if !(span > 0.0) {
            return Err(Error::InvalidWarp("knots must ascend".into()));
        }
        let step = span / (knots.len() - 1) as f64;
        for (i, &k) in knots.iter().enumerate() {
            let expected = knots[0] + step * i as f64;
            if (k - expected).abs() > KNOT_SPACING_TOL * span.max(knots[0].abs()) {
                return Err(Error::InvalidWarp(format!(
                    "knot {i} at {k} is not equidistant (expected {expected})"
                )));
            }
        }
        if let Some(i) = values.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidWarp(format!(
                "values not strictly increasing at knot {}",
                i + 1
            )));
        }
        Ok(Self {
            knots,
            values,
            label: String::new(),
        })
    }

    /// `count` equidistant knots on `[lo, hi]` with values `f(knot)`.
    pub fn from_fn(lo: f64, hi: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let knots = equidistant(lo, hi, count)?;
        let values = knots.iter().map(|&k| f(k)).collect();
        Self::new(knots, values)
    }

    pub fn identity(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::from_fn(lo, hi, count, |t| t)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knot_spacing(&self) -> f64 {
        let (lo, hi) = self.domain();
        (hi - lo) / (self.knots.len() - 1) as f64
    }

    /// True when `t` lies outside the knot span and is extrapolated.
    pub fn is_extrapolated(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        t < lo || t > hi
    }

    /// Segment index for `t`, clamped to the boundary segments. A knot belongs
    /// to the segment on its right.
    fn segment(&self, t: f64) -> usize {
        let last = self.knots.len() - 2;
        let (lo, _) = self.domain();
        let raw = ((t - lo) / self.knot_spacing()).floor();
        if raw < 0.0 {
            return 0;
        }
        let mut k = (raw as usize).min(last);
        // Correct floating rounding of the division against the stored knots.
        while k > 0 && t < self.knots[k] {
            k -= 1;
        }
        while k < last && t >= self.knots[k + 1] {
            k += 1;
        }
        k
    }

    fn slope(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) / (self.knots[k + 1] - self.knots[k])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        if t == x1 {
            return y1;
        }
        y0 + (t - x0) * (y1 - y0) / (x1 - x0)
    }

    pub fn inverse(&self, x: f64) -> f64 {
        let last = self.values.len() - 2;
        let k = self.values.partition_point(|&v| v <= x).saturating_sub(1).min(last);
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        if x == y1 {
            return x1;
        }
        x0 + (x - y0) * (x1 - x0) / (y1 - y0)
    }

    /// Segment slope; right-hand slope at a knot.
    pub fn derivative(&self, t: f64) -> f64 {
        self.slope(self.segment(t))
    }

    pub fn inverse_derivative(&self, x: f64) -> f64 {
        1.0 / self.derivative(self.inverse(x))
    }

    /// Replaces one knot value, keeping strict monotonicity.
    pub fn with_value(&self, knot: usize, value: f64) -> Result<Self> {
        if !self.admits(knot, value) {
            return Err(Error::InvalidWarp(format!(
                "value {value} at knot {knot} breaks strict monotonicity"
            )));
        }
        let mut w = self.clone();
        w.values[knot] = value;
        Ok(w)
    }

    /// Whether `value` at `knot` keeps the values strictly increasing.
    pub fn admits(&self, knot: usize, value: f64) -> bool {
        value.is_finite()
            && (knot == 0 || value > self.values[knot - 1])
            && (knot + 1 == self.values.len() || value < self.values[knot + 1])
    }

    pub(crate) fn set_value_unchecked(&mut self, knot: usize, value: f64) {
        self.values[knot] = value;
    }

    pub fn to_file(&self) -> WarpFile {
        WarpFile {
            domain: [self.knots[0], self.knots[self.knots.len() - 1]],
            knots: self.knots.clone(),
            values: self.values.clone(),
            label: self.label.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("warp serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WarpFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl TimeWarp for PiecewiseLinearWarp {
    fn apply(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.knots
    }
}

/// On-disk form of a warp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpFile {
    pub domain: [f64; 2],
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl TryFrom<WarpFile> for PiecewiseLinearWarp {
    type Error = Error;

    fn try_from(file: WarpFile) -> Result<Self> {
        let w = PiecewiseLinearWarp::new(file.knots, file.values)?.with_label(file.label);
        if w.domain() != (file.domain[0], file.domain[1]) {
            return Err(Error::InvalidWarp(format!(
                "domain {:?} does not match knot span {:?}",
                file.domain,
                w.domain()
            )));
        }
        Ok(w)
    }
}

impl Serialize for PiecewiseLinearWarp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PiecewiseLinearWarp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = WarpFile::deserialize(d)?;
        file.try_into().map_err(serde::de::Error::custom)
    }
}

pub fn equidistant(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(hi > lo) {
        return Err(Error::InvalidWarp(format!(
            "cannot place {count} knots on [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (count - 1) as f64;
    let mut v: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    v[count - 1] = hi;
    Ok(v)
}

/// Minimum grid resolution used by [`sup_distance`].
pub const SUP_GRID_MIN: usize = 2048;

/// `sup |w1 - w2|` over `[lo, hi]`, evaluated on an equidistant grid of at
/// least [`SUP_GRID_MIN`] points plus every breakpoint of either warp.
pub fn sup_distance(
    w1: &dyn TimeWarp,
    w2: &dyn TimeWarp,
    interval: (f64, f64),
    grid_points: usize,
) -> f64 {
    let (lo, hi) = interval;
    let n = grid_points.max(SUP_GRID_MIN);
    let grid = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64);
    let kinks = w1
        .breakpoints()
        .iter()
        .chain(w2.breakpoints())
        .copied()
        .filter(|t| *t >= lo && *t <= hi);
    grid.chain(kinks)
        .map(|t| (w1.apply(t) - w2.apply(t)).abs())
        .fold(0.0, f64::max)
}
