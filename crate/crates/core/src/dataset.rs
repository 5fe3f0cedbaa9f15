//! Label-distribution datasets: loading, validation, serialization and
//! random train/test splitting.
//!
//! The canonical text format is line-oriented:
//!
//! ```text
//! n m p
//! x_1 ... x_m | y_1 ... y_p
//! ...
//! ```
//!
//! Values are whitespace-delimited ASCII decimals. The CSV variant carries a
//! header row `f1,...,fm,y1,...,yp`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::numeric::round_half_up;
use crate::seed;

/// Row sums must match 1 within this tolerance for a dataset to be valid.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Default tolerance accepted by [`renormalize`].
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    CanonicalText,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.csv` is
    /// treated as canonical text.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::CanonicalText,
        }
    }
}

impl FromStr for Format {
    type Err = LdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" | "canonical-text" | "text" | "txt" => Ok(Format::CanonicalText),
            "csv" => Ok(Format::Csv),
            other => Err(LdlError::InvalidArgument(format!(
                "unknown dataset format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Rescale rows whose sums are within [`RENORMALIZE_TOLERANCE`] of 1
    /// instead of rejecting them.
    pub renormalize: bool,
}

/// Feature matrix plus one label distribution per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistributionDataset {
    pub name: String,
    features: Array2<f64>,
    distributions: Array2<f64>,
}

impl LabelDistributionDataset {
    /// Builds a dataset, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        distributions: Array2<f64>,
    ) -> Result<Self> {
        let ds = Self::new_unchecked(name, features, distributions)?;
        ds.validate(SIMPLEX_TOLERANCE)?;
        Ok(ds)
    }

    fn new_unchecked(
        name: impl Into<String>,
        features: Array2<f64>,
        distributions: Array2<f64>,
    ) -> Result<Self> {
        if features.nrows() != distributions.nrows() {
            return Err(LdlError::DimensionMismatch {
                expected: features.nrows(),
                actual: distributions.nrows(),
            });
        }
        if features.nrows() == 0 || features.ncols() == 0 || distributions.ncols() == 0 {
            return Err(LdlError::InvalidArgument(
                "dataset needs at least one instance, feature and label".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            features,
            distributions,
        })
    }

    fn validate(&self, tolerance: f64) -> Result<()> {
        for (row, x) in self.features.outer_iter().enumerate() {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(LdlError::NonFiniteFeature { row: row + 1 });
            }
        }
        for (row, y) in self.distributions.outer_iter().enumerate() {
            check_simplex_row(row + 1, y, tolerance)?;
        }
        Ok(())
    }

    pub fn instance_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn label_count(&self) -> usize {
        self.distributions.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn distributions(&self) -> &Array2<f64> {
        &self.distributions
    }

    /// Restricts the dataset to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabelDistributionDataset {
        LabelDistributionDataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            distributions: self.distributions.select(Axis(0), indices),
        }
    }

    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.instance_count(),
            self.feature_count(),
            self.label_count()
        );
        for (x, y) in self
            .features
            .outer_iter()
            .zip(self.distributions.outer_iter())
        {
            let mut first = true;
            for v in x.iter() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push_str(" |");
            for v in y.iter() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::CanonicalText => fs::write(path, self.to_canonical_string())
                .map_err(|e| LdlError::io(path, e)),
            Format::Csv => {
                let mut w = csv::Writer::from_path(path)?;
                let header: Vec<String> = (1..=self.feature_count())
                    .map(|i| format!("f{i}"))
                    .chain((1..=self.label_count()).map(|j| format!("y{j}")))
                    .collect();
                w.write_record(&header)?;
                for (x, y) in self
                    .features
                    .outer_iter()
                    .zip(self.distributions.outer_iter())
                {
                    let rec: Vec<String> =
                        x.iter().chain(y.iter()).map(|v| v.to_string()).collect();
                    w.write_record(&rec)?;
                }
                w.flush().map_err(|e| LdlError::io(path, e))?;
                Ok(())
            }
        }
    }
}

fn check_simplex_row(row: usize, y: ArrayView1<f64>, tolerance: f64) -> Result<()> {
    for &v in y.iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(LdlError::NegativeDegree { row, value: v });
        }
        if v > 1.0 + tolerance {
            return Err(LdlError::SimplexViolation {
                row,
                sum: y.sum(),
                tolerance,
            });
        }
    }
    let sum = y.sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(LdlError::SimplexViolation {
            row,
            sum,
            tolerance,
        });
    }
    Ok(())
}

/// Loads a dataset from `path`.
pub fn load_dataset(
    path: &Path,
    format: Format,
    options: LoadOptions,
) -> Result<LabelDistributionDataset> {
    let text = fs::read_to_string(path).map_err(|e| LdlError::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let raw = match format {
        Format::CanonicalText => parse_canonical(&name, &text)?,
        Format::Csv => parse_csv(&name, &text)?,
    };
    finish_load(raw, options)
}

fn finish_load(
    raw: LabelDistributionDataset,
    options: LoadOptions,
) -> Result<LabelDistributionDataset> {
    if options.renormalize {
        renormalize(&raw, RENORMALIZE_TOLERANCE)
    } else {
        raw.validate(SIMPLEX_TOLERANCE)?;
        Ok(raw)
    }
}

/// Parses the canonical text format from a string.
pub fn parse_canonical(name: &str, text: &str) -> Result<LabelDistributionDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| LdlError::MalformedHeader("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| LdlError::MalformedHeader(format!("`{header}`: {e}")))?;
    let [n, m, p] = dims[..] else {
        return Err(LdlError::MalformedHeader(format!(
            "expected `n m p`, found `{header}`"
        )));
    };
    if n == 0 || m == 0 || p == 0 {
        return Err(LdlError::MalformedHeader(format!(
            "dimensions must be positive, found `{header}`"
        )));
    }

    let mut features = Vec::with_capacity(n * m);
    let mut dists = Vec::with_capacity(n * p);
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        rows += 1;
        if rows > n {
            return Err(LdlError::Parse {
                line: line_no,
                message: format!("more than the declared {n} rows"),
            });
        }
        let (lhs, rhs) = line.split_once('|').ok_or_else(|| LdlError::Parse {
            line: line_no,
            message: "missing `|` separator".into(),
        })?;
        let xs = parse_values(lhs, line_no)?;
        let ys = parse_values(rhs, line_no)?;
        if xs.len() != m || ys.len() != p {
            return Err(LdlError::Parse {
                line: line_no,
                message: format!(
                    "row has {} + {} values, expected {m} + {p}",
                    xs.len(),
                    ys.len()
                ),
            });
        }
        features.extend(xs);
        dists.extend(ys);
    }
    if rows != n {
        return Err(LdlError::Parse {
            line: text.lines().count(),
            message: format!("header declares {n} rows, found {rows}"),
        });
    }
    let features = Array2::from_shape_vec((n, m), features).expect("shape checked");
    let distributions = Array2::from_shape_vec((n, p), dists).expect("shape checked");
    LabelDistributionDataset::new_unchecked(name, features, distributions)
}

fn parse_values(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| LdlError::Parse {
                line,
                message: format!("invalid number `{t}`"),
            })
        })
        .collect()
}

fn parse_csv(name: &str, text: &str) -> Result<LabelDistributionDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let m = headers.iter().take_while(|h| h.starts_with('f')).count();
    let p = headers.len() - m;
    let well_formed = headers
        .iter()
        .enumerate()
        .all(|(i, h)| if i < m { h == format!("f{}", i + 1) } else { h == format!("y{}", i - m + 1) });
    if m == 0 || p == 0 || !well_formed {
        return Err(LdlError::MalformedHeader(format!(
            "expected `f1..fm,y1..yp`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut features = Vec::new();
    let mut dists = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != m + p {
            return Err(LdlError::Parse {
                line,
                message: format!("row has {} values, expected {}", record.len(), m + p),
            });
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| LdlError::Parse {
                line,
                message: format!("invalid number `{field}`"),
            })?;
            if k < m {
                features.push(v);
            } else {
                dists.push(v);
            }
        }
        n += 1;
    }
    let features = Array2::from_shape_vec((n, m), features).expect("shape checked");
    let distributions = Array2::from_shape_vec((n, p), dists).expect("shape checked");
    LabelDistributionDataset::new_unchecked(name, features, distributions)
}

/// Divides every distribution row by its sum.
///
/// Fails when a row sum is farther than `tolerance` from 1 or a degree is
/// negative.
pub fn renormalize(
    dataset: &LabelDistributionDataset,
    tolerance: f64,
) -> Result<LabelDistributionDataset> {
    let mut out = dataset.clone();
    for (row, mut y) in out.distributions.outer_iter_mut().enumerate() {
        if let Some(&v) = y.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(LdlError::NegativeDegree { row: row + 1, value: v });
        }
        let sum = y.sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(LdlError::SimplexViolation {
                row: row + 1,
                sum,
                tolerance,
            });
        }
        y.mapv_inplace(|v| v / sum);
    }
    out.validate(SIMPLEX_TOLERANCE)?;
    Ok(out)
}

/// Disjoint train/test index lists covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Samples `round(fraction * n)` training indices without replacement
/// (round half up). Both lists are returned in ascending order.
pub fn split_random(n: usize, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < 2 {
        return Err(LdlError::InvalidArgument(format!(
            "cannot split {n} instances"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LdlError::InvalidArgument(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n_train = round_half_up(fraction * n as f64);
    if n_train == 0 || n_train >= n {
        return Err(LdlError::InvalidArgument(format!(
            "fraction {fraction} of {n} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_single_row() {
        let ds = parse_canonical("t", "1 2 2\n1.0 2.0 | 0.5 0.5\n").unwrap();
        ds.validate(SIMPLEX_TOLERANCE).unwrap();
        assert_eq!(ds.instance_count(), 1);
        assert_eq!(ds.feature_count(), 2);
        assert_eq!(ds.distributions().row(0).sum(), 1.0);
    }

    #[test]
    fn rejects_off_simplex_row_with_row_number() {
        let text = "2 1 2\n0.0 | 0.5 0.5\n1.0 | 0.49 0.49\n";
        let raw = parse_canonical("t", text).unwrap();
        let err = finish_load(raw, LoadOptions::default()).unwrap_err();
        match err {
            LdlError::SimplexViolation { row, sum, .. } => {
                assert_eq!(row, 2);
                assert!((sum - 0.98).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_row_length_errors() {
        assert!(matches!(
            parse_canonical("t", "2 2\n"),
            Err(LdlError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_canonical("t", "1 2 2\n1.0 | 0.5 0.5\n"),
            Err(LdlError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_canonical("t", "2 1 1\n1.0 | 1\n"),
            Err(LdlError::Parse { .. })
        ));
    }

    #[test]
    fn renormalize_rows() {
        let ds = LabelDistributionDataset::new_unchecked(
            "t",
            array![[0.0], [1.0]],
            array![[0.501, 0.501], [0.25, 0.75]],
        )
        .unwrap();
        // sum 1.002 needs a looser tolerance than the 1e-3 default
        assert!(renormalize(&ds, RENORMALIZE_TOLERANCE).is_err());
        let out = renormalize(&ds, 1e-2).unwrap();
        assert_eq!(out.distributions().row(0).to_vec(), vec![0.5, 0.5]);
        for (a, b) in out
            .distributions()
            .row(1)
            .iter()
            .zip(ds.distributions().row(1))
        {
            assert!((a - b).abs() < 1e-15);
        }

        let bad = LabelDistributionDataset::new_unchecked("t", array![[0.0]], array![[0.7, 0.2]])
            .unwrap();
        assert!(matches!(
            renormalize(&bad, 1e-3),
            Err(LdlError::SimplexViolation { row: 1, .. })
        ));
        let negative =
            LabelDistributionDataset::new_unchecked("t", array![[0.0]], array![[1.1, -0.1]])
                .unwrap();
        assert!(matches!(
            renormalize(&negative, 1e-3),
            Err(LdlError::NegativeDegree { .. })
        ));
    }

    #[test]
    fn renormalize_flag_on_load() {
        let raw = parse_canonical("t", "1 1 2\n3 | 0.5004 0.5\n").unwrap();
        assert!(finish_load(raw.clone(), LoadOptions::default()).is_err());
        let ds = finish_load(raw, LoadOptions { renormalize: true }).unwrap();
        assert!((ds.distributions().row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_random(10, 0.5, 7).unwrap();
        assert_eq!(s.train.len(), 5);
        assert_eq!(s.test.len(), 5);
        assert_eq!(s, split_random(10, 0.5, 7).unwrap());
        assert_eq!(split_random(2465, 0.5, 1).unwrap().train.len(), 1233);
        assert!(split_random(1, 0.5, 0).is_err());
        assert!(split_random(3, 0.1, 0).is_err());
    }

    #[test]
    fn split_inclusion_frequency_is_balanced() {
        let n = 40;
        let mut counts = vec![0usize; n];
        for seed in 0..1000 {
            for i in split_random(n, 0.5, seed).unwrap().train {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 0.5).abs() <= 0.05, "frequency {freq}");
        }
    }

    #[test]
    fn format_from_path() {
        assert_eq!(Format::from_path(Path::new("a/b.csv")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a/b.txt")), Format::CanonicalText);
    }
}
