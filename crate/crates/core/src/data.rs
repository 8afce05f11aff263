//! Functional datasets: ingestion, validation and descriptive summaries.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How exact duplicate time stamps are treated on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Reject,
    /// Nudge each tied time up to the next representable float.
    Jitter,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub label: Option<String>,
    pub units: Option<String>,
    pub ties: TiePolicy,
}

/// Bookkeeping about what ingestion changed or dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub dropped_blank_rows: usize,
    pub jittered_ties: usize,
}

/// A finite sample `{(t_i, y_i)}` sorted by strictly ascending time.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    label: String,
    units: Option<String>,
    times: Vec<f64>,
    values: Vec<f64>,
    support: (f64, f64),
    diagnostics: IngestDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub size: usize,
    pub t_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl FunctionalDataset {
    /// Builds a dataset, rejecting duplicate time stamps.
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::with_ties(label, times, values, TiePolicy::Reject)
    }

    pub fn with_ties(
        label: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        ties: TiePolicy,
    ) -> Result<Self> {
        let label = label.into();
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::EmptyDataset(label));
        }
        for (index, (t, y)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || !y.is_finite() {
                return Err(Error::NonFiniteValue { label, index });
            }
        }

        // Sort pairs by (t, y) so ingestion does not depend on row order.
        let mut pairs: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let mut jittered = 0;
        for i in 1..pairs.len() {
            if pairs[i].0 <= pairs[i - 1].0 {
                match ties {
                    TiePolicy::Reject => {
                        return Err(Error::DuplicateTime {
                            label,
                            time: pairs[i].0,
                        })
                    }
                    TiePolicy::Jitter => {
                        pairs[i].0 = pairs[i - 1].0.next_up();
                        jittered += 1;
                    }
                }
            }
        }

        let (times, values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let support = (times[0], times[times.len() - 1]);
        Ok(Self {
            label,
            units: None,
            times,
            values,
            support,
            diagnostics: IngestDiagnostics {
                dropped_blank_rows: 0,
                jittered_ties: jittered,
            },
        })
    }

    /// Overrides the time support (defaults to the observed time range).
    pub fn with_support(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= self.support.0 && hi >= self.support.1) {
            return Err(Error::InvalidConfig(format!(
                "support [{lo}, {hi}] does not cover observed times [{}, {}]",
                self.support.0, self.support.1
            )));
        }
        self.support = (lo, hi);
        Ok(self)
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = Some(units.into());
        self
    }

    pub fn from_csv_reader<R: Read>(reader: R, opts: &ParseOptions) -> Result<Self> {
        let label = opts.label.clone().unwrap_or_else(|| "dataset".to_string());
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dropped = 0;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 {
                if record.iter().all(str::is_empty) {
                    dropped += 1;
                    continue;
                }
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let (t, y) = (&record[0], &record[1]);
            if t.is_empty() || y.is_empty() {
                dropped += 1;
                continue;
            }
            let parse = |field: &str| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("'{field}' is not a number"),
                })
            };
            times.push(parse(t)?);
            values.push(parse(y)?);
        }

        let mut ds = Self::with_ties(label, times, values, opts.ties)?;
        ds.units = opts.units.clone();
        ds.diagnostics.dropped_blank_rows = dropped;
        Ok(ds)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["t", "y"]).map_err(io)?;
        for (t, y) in self.times.iter().zip(&self.values) {
            w.write_record([format!("{t:.16e}"), format!("{y:.16e}")])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn units(&self) -> Option<&str> {
        self.units.as_deref()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn diagnostics(&self) -> IngestDiagnostics {
        self.diagnostics
    }

    /// Points per unit time over the support. Infinite for a zero-length support.
    pub fn density(&self) -> f64 {
        let len = self.support.1 - self.support.0;
        if len > 0.0 {
            self.len() as f64 / len
        } else {
            f64::INFINITY
        }
    }

    pub fn y_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            })
    }

    pub fn summarize(&self) -> DatasetSummary {
        DatasetSummary {
            size: self.len(),
            t_range: (self.times[0], self.times[self.len() - 1]),
            y_range: self.y_range(),
        }
    }

    /// Returns a copy with one observation removed.
    pub fn without(&self, index: usize) -> Result<Self> {
        let mut times = self.times.clone();
        let mut values = self.values.clone();
        times.remove(index);
        values.remove(index);
        let mut ds = Self::new(self.label.clone(), times, values)?;
        ds.units = self.units.clone();
        ds.support = self.support;
        Ok(ds)
    }

    /// Returns a copy with every value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut ds = self.clone();
        for y in &mut ds.values {
            *y += delta;
        }
        ds
    }
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<FunctionalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut opts = opts.clone();
    if opts.label.is_none() {
        opts.label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned());
    }
    FunctionalDataset::from_csv_reader(file, &opts)
}

pub fn summarize(ds: &FunctionalDataset) -> DatasetSummary {
    ds.summarize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FunctionalDataset> {
        FunctionalDataset::from_csv_reader(text.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn parses_two_rows() {
        let ds = parse("t,y\n0,1\n1,3").unwrap();
        let s = ds.summarize();
        assert_eq!(s.size, 2);
        assert_eq!(s.t_range, (0.0, 1.0));
        assert_eq!(s.y_range, (1.0, 3.0));
    }

    #[test]
    fn malformed_row_is_parse_error() {
        let err = parse("t,y\n0,1\na,b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn wrong_field_count_is_parse_error() {
        assert!(matches!(parse("t,y\n0,1,2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(parse("t,y\n"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            parse("t,y\n0,1\n1,NaN\n"),
            Err(Error::NonFiniteValue { index: 1, .. })
        ));
        assert!(matches!(
            parse("t,y\ninf,1\n"),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn blank_fields_are_dropped_and_counted() {
        let ds = parse("t,y\n0,1\n1,\n,4\n2,5\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.diagnostics().dropped_blank_rows, 2);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let ds = parse("t,y\n2,20\n0,0\n1,10\n").unwrap();
        assert_eq!(ds.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.values(), &[0.0, 10.0, 20.0]);
    }

    #[test]
    fn duplicate_times_rejected_by_default() {
        assert!(matches!(
            parse("t,y\n1,1\n1,2\n"),
            Err(Error::DuplicateTime { .. })
        ));
    }

    #[test]
    fn duplicate_times_jittered_on_request() {
        let opts = ParseOptions {
            ties: TiePolicy::Jitter,
            ..Default::default()
        };
        let ds =
            FunctionalDataset::from_csv_reader("t,y\n1,2\n1,1\n1,3\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.diagnostics().jittered_ties, 2);
        assert_eq!(ds.times()[0], 1.0);
        assert_eq!(ds.times()[1], 1.0f64.next_up());
        assert_eq!(ds.times()[2], 1.0f64.next_up().next_up());
        assert_eq!(ds.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn singleton_summary() {
        let ds = FunctionalDataset::new("one", vec![5.0], vec![7.0]).unwrap();
        let s = ds.summarize();
        assert_eq!(s.size, 1);
        assert_eq!(s.t_range, (5.0, 5.0));
        assert_eq!(s.y_range, (7.0, 7.0));
        assert!(ds.density().is_infinite());
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            FunctionalDataset::new("x", vec![1.0, 2.0], vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn support_override_must_cover_data() {
        let ds = FunctionalDataset::new("x", vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(ds.clone().with_support(1.5, 3.0).is_err());
        assert_eq!(ds.with_support(0.0, 3.0).unwrap().support(), (0.0, 3.0));
    }
}
