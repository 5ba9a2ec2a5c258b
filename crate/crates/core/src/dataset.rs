//! Finite weighted distributions over `(value, label)` pairs.
//!
//! Every metric in this crate reads a predictor only through the pairs
//! `(f(x), y)` (or `(g(x), y)` for logits), so a [`WeightedSample`] carries
//! values rather than features. [`FeaturedSample`] keeps the features around
//! for the places where predictors are fitted.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values closer than this are merged by [`WeightedSample::collapse`].
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Where the values of a sample live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Predictions in `[0, 1]`.
    Prediction,
    /// Dual predictions (logits) anywhere on the real line.
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub value: f64,
    pub label: u8,
    pub weight: f64,
}

impl Point {
    pub fn new(value: f64, label: u8, weight: f64) -> Self {
        Point {
            value,
            label,
            weight,
        }
    }

    #[inline]
    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// A finite distribution over `(value, label)` pairs with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSample {
    points: Vec<Point>,
    space: Space,
}

impl WeightedSample {
    /// Validates the points and normalizes their weights to sum to one.
    /// Weights that already sum to one up to rounding are kept as given, so
    /// saving and reloading a sample reproduces it exactly.
    pub fn new(points: Vec<Point>, space: Space) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        for (i, p) in points.iter().enumerate() {
            check_point(i + 1, p, space)?;
        }
        let total: f64 = points.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() <= NORMALIZED_TOLERANCE * points.len() as f64 {
            return Ok(WeightedSample { points, space });
        }
        let points = points
            .into_iter()
            .map(|p| Point {
                weight: p.weight / total,
                ..p
            })
            .collect();
        Ok(WeightedSample { points, space })
    }

    /// Uniform weights over `(value, label)` pairs.
    pub fn uniform(pairs: &[(f64, u8)], space: Space) -> Result<Self> {
        let points = pairs.iter().map(|&(v, y)| Point::new(v, y, 1.0)).collect();
        Self::new(points, space)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted expectation of `h(value, y)`.
    pub fn expect(&self, mut h: impl FnMut(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .map(|p| p.weight * h(p.value, p.y()))
            .sum()
    }

    /// Maps every value through `map` into a sample living in `space`.
    pub fn map_values(&self, space: Space, mut map: impl FnMut(f64) -> f64) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|p| Point {
                value: map(p.value),
                ..*p
            })
            .collect();
        Self::new(points, space)
    }

    pub fn require_space(&self, expected: Space) -> Result<()> {
        if self.space != expected {
            return Err(Error::WrongSpace {
                expected,
                found: self.space,
            });
        }
        Ok(())
    }

    /// Merges duplicate values into sorted distinct knots.
    pub fn collapse(&self) -> CollapsedSample {
        collapse_duplicates(self)
    }

    pub fn load(path: impl AsRef<Path>, format: Format, space: Space) -> Result<Self> {
        load_sample(path, format, space)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        let text = match format {
            Format::Csv => self.to_csv_string(),
            Format::Json => self.to_json_string(),
        };
        let mut file = fs::File::create(path)?;
        file.write_all(text.as_bytes())?;
        Ok(())
    }

    /// CSV with a `value,label,weight` header and 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("value,label,weight\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt17(p.value),
                p.label,
                fmt17(p.weight)
            ));
        }
        out
    }

    /// JSON array of `{value, label, weight}` objects with 17 significant digits.
    pub fn to_json_string(&self) -> String {
        let rows: Vec<String> = self
            .points
            .iter()
            .map(|p| {
                format!(
                    "{{\"value\":{},\"label\":{},\"weight\":{}}}",
                    fmt17(p.value),
                    p.label,
                    fmt17(p.weight)
                )
            })
            .collect();
        format!("[{}]\n", rows.join(","))
    }
}

/// Per-point slack on the weight total below which weights count as normalized.
pub const NORMALIZED_TOLERANCE: f64 = 1e-15;

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

fn check_point(row: usize, p: &Point, space: Space) -> Result<()> {
    if p.label > 1 {
        return Err(Error::InvalidLabel {
            row,
            label: p.label.to_string(),
        });
    }
    if !(p.weight.is_finite() && p.weight > 0.0) {
        return Err(Error::InvalidWeight {
            row,
            weight: p.weight,
        });
    }
    if !p.value.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("value {} is not finite", p.value),
        });
    }
    if space == Space::Prediction && !(0.0..=1.0).contains(&p.value) {
        return Err(Error::ValueOutOfRange {
            row,
            value: p.value,
        });
    }
    Ok(())
}

fn parse_label(row: usize, raw: &str) -> Result<u8> {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(Error::InvalidLabel {
            row,
            label: trimmed.to_string(),
        }),
    }
}

fn parse_float(row: usize, what: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        row,
        message: format!("bad {what} {raw:?}: {e}"),
    })
}

/// Reads `value,label[,weight]` rows from CSV or a JSON array of objects.
///
/// A CSV header row is optional and is recognized by a non-numeric first field.
/// A missing weight column means uniform weights.
pub fn load_sample(path: impl AsRef<Path>, format: Format, space: Space) -> Result<WeightedSample> {
    let text = fs::read_to_string(path)?;
    match format {
        Format::Csv => parse_csv(&text, space),
        Format::Json => parse_json(&text, space),
    }
}

pub fn parse_csv(text: &str, space: Space) -> Result<WeightedSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row == 1 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if !(2..=3).contains(&record.len()) {
            return Err(Error::Parse {
                row,
                message: format!("expected 2 or 3 columns, found {}", record.len()),
            });
        }
        let value = parse_float(row, "value", &record[0])?;
        let label = parse_label(row, &record[1])?;
        let weight = match record.get(2) {
            Some(w) => parse_float(row, "weight", w)?,
            None => 1.0,
        };
        let p = Point::new(value, label, weight);
        check_point(row, &p, space)?;
        points.push(p);
    }
    WeightedSample::new(points, space)
}

#[derive(Deserialize)]
struct JsonRow {
    value: f64,
    label: f64,
    #[serde(default)]
    weight: Option<f64>,
}

pub fn parse_json(text: &str, space: Space) -> Result<WeightedSample> {
    let rows: Vec<serde_json::Value> = serde_json::from_str(text)?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, raw) in rows.into_iter().enumerate() {
        let row = i + 1;
        let parsed: JsonRow = serde_json::from_value(raw).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let label = parse_label(row, &parsed.label.to_string())?;
        let p = Point::new(parsed.value, label, parsed.weight.unwrap_or(1.0));
        check_point(row, &p, space)?;
        points.push(p);
    }
    WeightedSample::new(points, space)
}

/// Distinct sorted knots with their total weight and conditional label mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapsedSample {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub label_means: Vec<f64>,
    pub space: Space,
}

impl CollapsedSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `E[(y - v) * eta(v)]` computed from the collapsed statistics.
    pub fn residual_correlation(&self, mut eta: impl FnMut(f64) -> f64) -> f64 {
        self.iter()
            .map(|(v, w, ybar)| w * (ybar - v) * eta(v))
            .sum()
    }

    /// Iterates `(value, weight, label_mean)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.weights)
            .zip(&self.label_means)
            .map(|((&v, &w), &y)| (v, w, y))
    }
}

pub fn collapse_duplicates(s: &WeightedSample) -> CollapsedSample {
    let mut pts: Vec<Point> = s.points().to_vec();
    pts.sort_by(|a, b| a.value.total_cmp(&b.value));

    let mut values: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut positive: Vec<f64> = Vec::new();
    for p in pts {
        match values.last() {
            Some(&anchor) if p.value - anchor <= DUPLICATE_TOLERANCE => {
                *weights.last_mut().unwrap() += p.weight;
                *positive.last_mut().unwrap() += p.weight * p.y();
            }
            _ => {
                values.push(p.value);
                weights.push(p.weight);
                positive.push(p.weight * p.y());
            }
        }
    }
    let label_means = positive
        .iter()
        .zip(&weights)
        .map(|(py, w)| (py / w).clamp(0.0, 1.0))
        .collect();
    CollapsedSample {
        values,
        weights,
        label_means,
        space: s.space(),
    }
}

/// One row of a featured data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturedRow {
    pub features: Vec<f64>,
    pub label: u8,
    pub weight: f64,
}

/// Rows of `(features, label, weight)` with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturedSample {
    rows: Vec<FeaturedRow>,
    dim: usize,
}

impl FeaturedSample {
    pub fn new(rows: Vec<FeaturedRow>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySample)?;
        let dim = first.features.len();
        for (i, r) in rows.iter().enumerate() {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    row: i + 1,
                    expected: dim,
                    found: r.features.len(),
                });
            }
            if r.label > 1 {
                return Err(Error::InvalidLabel {
                    row: i + 1,
                    label: r.label.to_string(),
                });
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(Error::InvalidWeight {
                    row: i + 1,
                    weight: r.weight,
                });
            }
        }
        let total: f64 = rows.iter().map(|r| r.weight).sum();
        let rows = rows
            .into_iter()
            .map(|r| FeaturedRow {
                weight: r.weight / total,
                ..r
            })
            .collect();
        Ok(FeaturedSample { rows, dim })
    }

    /// Uniformly weighted one-dimensional rows.
    pub fn from_1d(pairs: &[(f64, u8)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(x, y)| FeaturedRow {
                    features: vec![x],
                    label: y,
                    weight: 1.0,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[FeaturedRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Pushes every row through `predict`, keeping labels and weights.
    pub fn predictions(
        &self,
        space: Space,
        mut predict: impl FnMut(&[f64]) -> f64,
    ) -> Result<WeightedSample> {
        let points = self
            .rows
            .iter()
            .map(|r| Point::new(predict(&r.features), r.label, r.weight))
            .collect();
        WeightedSample::new(points, space)
    }

    /// Same rows with every label flipped.
    pub fn with_flipped_labels(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| FeaturedRow {
                label: 1 - r.label,
                ..r.clone()
            })
            .collect();
        FeaturedSample {
            rows,
            dim: self.dim,
        }
    }
}
