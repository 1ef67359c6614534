//! Tabular dataset abstraction, survey-style ingestion, and trip pooling.
//!
//! All survey answers are numeric codes. A [`Dataset`] is immutable after
//! construction: a finite n×p feature matrix, binary labels, and one
//! [`FeatureSpec`] per column describing kind, permitted levels, pooling
//! rule, and construct tag.

mod synthetic;

pub use synthetic::{
    canonical_benchmark, default_specs, generate_synthetic, SyntheticConfig,
    BENCHMARK_SIGNAL_FEATURES, BENCHMARK_SIGNAL_STRENGTH,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("value {value} outside declared levels at row {row}, column {column}")]
    BadLevel { row: usize, column: String, value: f64 },
    #[error("unparseable cell {value:?} at row {row}, column {column}")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("no data rows")]
    EmptyData,
    #[error("trip {trip} lacks a value for field {field}")]
    MissingTripData { trip: usize, field: String },
    #[error("empty trip record set")]
    NoTrips,
    #[error("intercept calibration did not converge in {0} bisection steps")]
    CalibrationFailure(usize),
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema parse error: {0}")]
    Schema(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Ordinal,
    Count,
    Continuous,
}

/// How per-trip answers are combined into one value per respondent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    None,
    Max,
    Sum,
}

/// Hypothesized-construct tag carried by each predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Construct {
    #[serde(rename = "control")]
    Control,
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Construct::Control => write!(f, "control"),
            Construct::H1 => write!(f, "H1"),
            Construct::H2 => write!(f, "H2"),
            Construct::H3 => write!(f, "H3"),
            Construct::H4 => write!(f, "H4"),
            Construct::H5 => write!(f, "H5"),
        }
    }
}

/// Per-predictor metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default = "default_pooling")]
    pub pooling: Pooling,
    #[serde(default = "default_construct")]
    pub construct: Construct,
}

fn default_pooling() -> Pooling {
    Pooling::None
}

fn default_construct() -> Construct {
    Construct::Control
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        match self.kind {
            FeatureKind::Binary => {
                if self.levels.as_deref() != Some(&[0.0, 1.0]) {
                    return Err(DataError::InvalidSpec(format!(
                        "binary feature {} must declare levels [0, 1]",
                        self.name
                    )));
                }
            }
            FeatureKind::Ordinal => {
                let levels = self.levels.as_deref().ok_or_else(|| {
                    DataError::InvalidSpec(format!("ordinal feature {} needs levels", self.name))
                })?;
                if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DataError::InvalidSpec(format!(
                        "ordinal feature {} needs >= 2 strictly increasing levels",
                        self.name
                    )));
                }
            }
            FeatureKind::Count | FeatureKind::Continuous => {}
        }
        Ok(())
    }

    fn admits(&self, value: f64) -> bool {
        match &self.levels {
            Some(levels) => levels.iter().any(|&l| l == value),
            None => value.is_finite(),
        }
    }
}

/// Sidecar schema descriptor: feature specs plus the label column name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub label_column: String,
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        for spec in &schema.features {
            spec.validate()?;
        }
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Immutable numeric feature matrix with binary labels and per-column specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    label_name: String,
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    specs: Vec<FeatureSpec>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        label_name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        specs: Vec<FeatureSpec>,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::EmptyData);
        }
        let p = specs.len();
        for spec in &specs {
            spec.validate()?;
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != p {
                return Err(DataError::InvalidSpec(format!(
                    "row {i} has {} values, expected {p}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonNumeric {
                        row: i,
                        column: specs[j].name.clone(),
                        value: v.to_string(),
                    });
                }
                if !specs[j].admits(v) {
                    return Err(DataError::BadLevel { row: i, column: specs[j].name.clone(), value: v });
                }
            }
        }
        if features.len() != labels.len() {
            return Err(DataError::InvalidSpec("label length mismatch".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(DataError::InvalidSpec("labels must be 0 or 1".into()));
        }
        Ok(Dataset { name: name.into(), label_name: label_name.into(), features, labels, specs })
    }

    /// Convenience constructor for all-continuous matrices (tests, oracles,
    /// intermediate model tables).
    pub fn from_continuous(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        let p = features.first().map_or(0, Vec::len);
        let specs = (0..p)
            .map(|j| FeatureSpec {
                name: format!("x{:02}", j + 1),
                kind: FeatureKind::Continuous,
                levels: None,
                pooling: Pooling::None,
                construct: Construct::Control,
            })
            .collect();
        Dataset::new(name, "label", features, labels, specs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn p(&self) -> usize {
        self.specs.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|r| r[j]).collect()
    }

    /// (count of label 0, count of label 1)
    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - ones, ones)
    }

    pub fn minority_label(&self) -> u8 {
        let (zeros, ones) = self.class_counts();
        u8::from(ones <= zeros)
    }

    pub fn rows_with_label(&self, label: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == label).collect()
    }

    /// Row-subset view materialized as a new dataset. Panics on out-of-range indices.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            label_name: self.label_name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            specs: self.specs.clone(),
        }
    }

    /// Appends synthetic minority rows; used by the balancing driver.
    pub(crate) fn with_appended_rows(&self, rows: Vec<Vec<f64>>, label: u8, name: String) -> Dataset {
        let mut features = self.features.clone();
        let mut labels = self.labels.clone();
        for row in rows {
            features.push(row);
            labels.push(label);
        }
        Dataset { name, label_name: self.label_name.clone(), features, labels, specs: self.specs.clone() }
    }

    pub fn schema(&self) -> Schema {
        Schema { label_column: self.label_name.clone(), features: self.specs.clone() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names();
        header.push(self.label_name.clone());
        w.write_record(&header)?;
        for (row, &y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a dataset from a CSV file and its sidecar schema descriptor.
///
/// The CSV header must contain every schema feature name plus the label
/// column; column order in the file is free, the schema order wins.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
    let schema = Schema::load(schema_path)?;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();

    let mut col_of = Vec::with_capacity(schema.features.len());
    for spec in &schema.features {
        let idx = header
            .iter()
            .position(|h| h == &spec.name)
            .ok_or_else(|| DataError::MissingColumn(spec.name.clone()))?;
        col_of.push(idx);
    }
    let label_idx = header
        .iter()
        .position(|h| h == &schema.label_column)
        .ok_or_else(|| DataError::MissingColumn(schema.label_column.clone()))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.features.len());
        for (spec, &ci) in schema.features.iter().zip(&col_of) {
            let cell = record.get(ci).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
                row: i,
                column: spec.name.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumeric { row: i, column: spec.name.clone(), value: cell.to_string() });
            }
            if !spec.admits(v) {
                return Err(DataError::BadLevel { row: i, column: spec.name.clone(), value: v });
            }
            row.push(v);
        }
        let cell = record.get(label_idx).unwrap_or("");
        let y: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
            row: i,
            column: schema.label_column.clone(),
            value: cell.to_string(),
        })?;
        if y != 0.0 && y != 1.0 {
            return Err(DataError::BadLevel { row: i, column: schema.label_column.clone(), value: y });
        }
        features.push(row);
        labels.push(y as u8);
    }
    if features.is_empty() {
        return Err(DataError::EmptyData);
    }
    let name = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    Dataset::new(name, schema.label_column.clone(), features, labels, schema.features)
}

/// Per-respondent answers over the trip-wise questions, one vector per trip.
#[derive(Debug, Clone)]
pub struct TripRecordSet {
    pub respondent_id: String,
    pub fields: Vec<String>,
    pub trips: Vec<Vec<f64>>,
}

/// Collapses up to four per-trip answer vectors into one pooled vector.
pub fn pool_trip_fields(
    records: &TripRecordSet,
    rule_per_field: &BTreeMap<String, Pooling>,
) -> Result<Vec<f64>, DataError> {
    if records.trips.is_empty() {
        return Err(DataError::NoTrips);
    }
    for (t, trip) in records.trips.iter().enumerate() {
        if trip.len() != records.fields.len() {
            let field = records.fields.get(trip.len()).cloned().unwrap_or_default();
            return Err(DataError::MissingTripData { trip: t, field });
        }
    }
    let mut pooled = Vec::with_capacity(records.fields.len());
    for (j, field) in records.fields.iter().enumerate() {
        let rule = rule_per_field
            .get(field)
            .ok_or_else(|| DataError::InvalidSpec(format!("no pooling rule for field {field}")))?;
        let values = records.trips.iter().map(|t| t[j]);
        let v = match rule {
            Pooling::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Pooling::Sum => values.sum(),
            Pooling::None => {
                return Err(DataError::InvalidSpec(format!("field {field} has rule none; expected max or sum")))
            }
        };
        pooled.push(v);
    }
    Ok(pooled)
}

/// Marginal summary of a dataset: class counts plus per-feature level
/// frequencies (discrete kinds) or a five-number summary (continuous).
#[derive(Debug, Clone, Serialize)]
pub struct DescribeReport {
    pub dataset: String,
    pub n: usize,
    pub p: usize,
    pub class_counts: BTreeMap<u8, usize>,
    pub features: Vec<FeatureSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureSummary {
    pub name: String,
    pub kind: FeatureKind,
    pub construct: Construct,
    /// value -> count, for binary/ordinal/count columns
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<BTreeMap<String, usize>>,
    /// (min, q1, median, q3, max) for continuous columns
    #[serde(skip_serializing_if = "Option::is_none")]
    pub five_number: Option<[f64; 5]>,
}

pub fn describe(ds: &Dataset) -> DescribeReport {
    let mut class_counts = BTreeMap::new();
    for &y in ds.labels() {
        *class_counts.entry(y).or_insert(0) += 1;
    }
    let features = ds
        .specs()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let col = ds.column(j);
            match spec.kind {
                FeatureKind::Continuous => FeatureSummary {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    construct: spec.construct,
                    frequencies: None,
                    five_number: Some(five_number(&col)),
                },
                _ => {
                    let mut freq = BTreeMap::new();
                    for v in col {
                        *freq.entry(v.to_string()).or_insert(0) += 1;
                    }
                    FeatureSummary {
                        name: spec.name.clone(),
                        kind: spec.kind,
                        construct: spec.construct,
                        frequencies: Some(freq),
                        five_number: None,
                    }
                }
            }
        })
        .collect();
    DescribeReport { dataset: ds.name().to_string(), n: ds.n(), p: ds.p(), class_counts, features }
}

fn five_number(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |f: f64| -> f64 {
        // linear interpolation between order statistics
        let h = f * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    [v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_spec(name: &str) -> FeatureSpec {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Binary,
            levels: Some(vec![0.0, 1.0]),
            pooling: Pooling::None,
            construct: Construct::Control,
        }
    }

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const SCHEMA_2BIN: &str = r#"{
        "label_column": "y",
        "features": [
            {"name": "a", "kind": "binary", "levels": [0, 1]},
            {"name": "b", "kind": "binary", "levels": [0, 1]}
        ]
    }"#;

    #[test]
    fn load_wellformed_csv() {
        let mut csv = String::from("a,b,y\n");
        for i in 0..10 {
            csv.push_str(&format!("{},{},{}\n", i % 2, (i / 2) % 2, i % 2));
        }
        let data = write_temp(&csv, ".csv");
        let schema = write_temp(SCHEMA_2BIN, ".json");
        let ds = load_dataset(data.path(), schema.path()).unwrap();
        assert_eq!(ds.n(), 10);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.labels().iter().filter(|&&y| y == 1).count(), 5);
    }

    #[test]
    fn bad_level_names_row_and_column() {
        let schema = r#"{
            "label_column": "y",
            "features": [{"name": "q", "kind": "ordinal", "levels": [1, 2, 3, 4, 5]}]
        }"#;
        let data = write_temp("q,y\n3,0\n7,1\n", ".csv");
        let schema = write_temp(schema, ".json");
        let err = load_dataset(data.path(), schema.path()).unwrap_err();
        match err {
            DataError::BadLevel { row, column, value } => {
                assert_eq!(row, 1);
                assert_eq!(column, "q");
                assert_eq!(value, 7.0);
            }
            other => panic!("expected BadLevel, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_data() {
        let data = write_temp("a,y\n1,0\n", ".csv");
        let schema = write_temp(SCHEMA_2BIN, ".json");
        assert!(matches!(
            load_dataset(data.path(), schema.path()),
            Err(DataError::MissingColumn(c)) if c == "b"
        ));
        let data = write_temp("a,b,y\n", ".csv");
        let schema = write_temp(SCHEMA_2BIN, ".json");
        assert!(matches!(load_dataset(data.path(), schema.path()), Err(DataError::EmptyData)));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let cfg = SyntheticConfig { n: 40, p: 6, target_minority_fraction: 0.3, signal_features: vec![0], signal_strength: 0.5, seed: 9 };
        let ds = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        let schema_path = dir.path().join("d.schema.json");
        ds.write_csv(&csv_path).unwrap();
        ds.schema().save(&schema_path).unwrap();
        let back = load_dataset(&csv_path, &schema_path).unwrap();
        assert_eq!(back.rows(), ds.rows());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn pooling_rules() {
        let records = TripRecordSet {
            respondent_id: "r1".into(),
            fields: vec!["duration".into(), "likes".into()],
            trips: vec![vec![2.0, 10.0], vec![5.0, 20.0], vec![3.0, 0.0]],
        };
        let mut rules = BTreeMap::new();
        rules.insert("duration".to_string(), Pooling::Max);
        rules.insert("likes".to_string(), Pooling::Sum);
        assert_eq!(pool_trip_fields(&records, &rules).unwrap(), vec![5.0, 30.0]);

        let single = TripRecordSet { trips: vec![vec![4.0, 7.0]], ..records.clone() };
        assert_eq!(pool_trip_fields(&single, &rules).unwrap(), vec![4.0, 7.0]);

        let empty = TripRecordSet { trips: vec![], ..records.clone() };
        assert!(matches!(pool_trip_fields(&empty, &rules), Err(DataError::NoTrips)));

        let ragged = TripRecordSet { trips: vec![vec![2.0, 1.0], vec![5.0]], ..records };
        assert!(matches!(pool_trip_fields(&ragged, &rules), Err(DataError::MissingTripData { trip: 1, .. })));
    }

    #[test]
    fn pooled_max_dominates_and_sum_is_exact() {
        let records = TripRecordSet {
            respondent_id: "r".into(),
            fields: vec!["m".into(), "s".into()],
            trips: vec![vec![1.0, 3.0], vec![4.0, 2.0], vec![2.0, 9.0], vec![0.0, 1.0]],
        };
        let mut rules = BTreeMap::new();
        rules.insert("m".to_string(), Pooling::Max);
        rules.insert("s".to_string(), Pooling::Sum);
        let pooled = pool_trip_fields(&records, &rules).unwrap();
        for trip in &records.trips {
            assert!(pooled[0] >= trip[0]);
        }
        assert_eq!(pooled[1], 15.0);
    }

    #[test]
    fn describe_counts() {
        let specs = vec![binary_spec("a")];
        let ds = Dataset::new(
            "t",
            "y",
            vec![vec![0.0], vec![1.0], vec![1.0], vec![1.0]],
            vec![0, 0, 1, 0],
            specs,
        )
        .unwrap();
        let report = describe(&ds);
        assert_eq!(report.class_counts.get(&0), Some(&3));
        assert_eq!(report.class_counts.get(&1), Some(&1));
        let freq = report.features[0].frequencies.as_ref().unwrap();
        assert_eq!(freq.get("0"), Some(&1));
        assert_eq!(freq.get("1"), Some(&3));
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        let specs = vec![binary_spec("a")];
        assert!(matches!(
            Dataset::new("t", "y", vec![], vec![], specs.clone()),
            Err(DataError::EmptyData)
        ));
        assert!(matches!(
            Dataset::new("t", "y", vec![vec![2.0]], vec![0], specs.clone()),
            Err(DataError::BadLevel { .. })
        ));
        assert!(matches!(
            Dataset::new("t", "y", vec![vec![f64::NAN]], vec![0], specs),
            Err(DataError::NonNumeric { .. })
        ));
    }
}
