//! Headered CSV ingestion and TOML dataset descriptors.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use super::{LabeledDataset, Labels};
use crate::error::{Result, SorrError};
use crate::tkml::LabelSet;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// One label column holding `-1/+1` or `0/1`.
    Binary,
    /// The last `num_labels` columns are 0/1 indicators.
    Multilabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub mode: LabelMode,
    /// Binary mode: name of the label column; defaults to the last column.
    pub label_column: Option<String>,
    /// Multi-label mode: number of trailing indicator columns.
    pub num_labels: usize,
    pub delimiter: u8,
}

impl CsvSchema {
    pub fn binary() -> Self {
        CsvSchema {
            mode: LabelMode::Binary,
            label_column: None,
            num_labels: 0,
            delimiter: b',',
        }
    }

    pub fn multilabel(num_labels: usize) -> Self {
        CsvSchema {
            mode: LabelMode::Multilabel,
            label_column: None,
            num_labels,
            delimiter: b',',
        }
    }
}

/// Reads a headered CSV file. Data rows are numbered from 1, excluding the
/// header, in parse errors.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LabeledDataset> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => SorrError::io(path, io),
            other => SorrError::Data(format!("{shown}: {other:?}")),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let width = header.len();

    let label_cols: Vec<usize> = match schema.mode {
        LabelMode::Binary => {
            let col = match &schema.label_column {
                Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
                    SorrError::Data(format!("{shown}: no column named '{name}'"))
                })?,
                None => width.checked_sub(1).ok_or_else(|| SorrError::Data(format!("{shown}: empty header")))?,
            };
            vec![col]
        }
        LabelMode::Multilabel => {
            if schema.num_labels < 2 || schema.num_labels >= width {
                return Err(SorrError::Data(format!(
                    "{shown}: {} label columns do not fit a header of {width}",
                    schema.num_labels
                )));
            }
            (width - schema.num_labels..width).collect()
        }
    };
    let feature_cols: Vec<usize> = (0..width).filter(|c| !label_cols.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(SorrError::Data(format!("{shown}: no feature columns")));
    }

    let mut values = Vec::new();
    let mut binary = Vec::new();
    let mut sets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != width {
            return Err(SorrError::Parse {
                path: shown.clone(),
                row,
                column: String::new(),
                message: format!("{} fields, header has {width}", record.len()),
            });
        }
        let cell_err = |c: usize, message: String| SorrError::Parse {
            path: shown.clone(),
            row,
            column: header[c].clone(),
            message,
        };
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell
                .parse()
                .map_err(|_| cell_err(c, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(cell_err(c, format!("'{cell}' is not finite")));
            }
            values.push(v);
        }
        match schema.mode {
            LabelMode::Binary => {
                let c = label_cols[0];
                let label = match record[c].trim_start_matches('+') {
                    "1" => 1,
                    "0" | "-1" => -1,
                    other => return Err(cell_err(c, format!("binary label '{other}' is not -1/+1 or 0/1"))),
                };
                binary.push(label);
            }
            LabelMode::Multilabel => {
                let indicators = label_cols
                    .iter()
                    .map(|&c| match &record[c] {
                        "1" => Ok(true),
                        "0" => Ok(false),
                        other => Err(cell_err(c, format!("indicator '{other}' is not 0/1"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let set = LabelSet::from_indicators(&indicators).map_err(|_| SorrError::Parse {
                    path: shown.clone(),
                    row,
                    column: String::new(),
                    message: "row has no positive label".into(),
                })?;
                sets.push(set);
            }
        }
    }
    let n = values.len() / feature_cols.len();
    if n == 0 {
        return Err(SorrError::Data(format!("{shown}: no data rows")));
    }
    let x = Array2::from_shape_vec((n, feature_cols.len()), values).expect("row width checked");
    let labels = match schema.mode {
        LabelMode::Binary => Labels::Binary(binary),
        LabelMode::Multilabel => Labels::Sets {
            sets,
            num_labels: schema.num_labels,
        },
    };
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LabeledDataset::new(x, labels)?.with_feature_names(names)?.with_name(stem))
}

/// Writes features and labels with a header, in the layout [`load_csv`] reads.
pub fn write_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => SorrError::io(path, io),
        other => SorrError::Data(format!("{}: {other:?}", path.display())),
    })?;
    let mut header: Vec<String> = match dataset.feature_names() {
        Some(names) => names.to_vec(),
        None => (1..=dataset.dim()).map(|j| format!("x{j}")).collect(),
    };
    match dataset.labels() {
        Labels::Binary(_) => header.push("label".into()),
        Labels::Sets { num_labels, .. } => header.extend((1..=*num_labels).map(|j| format!("y{j}"))),
    }
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| v.to_string()).collect();
        match dataset.labels() {
            Labels::Binary(y) => rec.push(y[i].to_string()),
            Labels::Sets { sets, num_labels } => {
                rec.extend((0..*num_labels).map(|j| if sets[i].contains(j) { "1" } else { "0" }.to_string()))
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| SorrError::io(path, e))
}

/// Plain-text (TOML) description of a tabular dataset on disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub name: String,
    /// CSV path, relative to the descriptor's directory unless absolute.
    pub path: PathBuf,
    pub mode: LabelMode,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub num_labels: usize,
    /// Standardize features using training-split statistics.
    #[serde(default)]
    pub standardize: bool,
    /// Majority/minority ratio, for documentation only.
    #[serde(default)]
    pub class_ratio: Option<f64>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl DatasetDescriptor {
    pub fn schema(&self) -> Result<CsvSchema> {
        if !self.delimiter.is_ascii() {
            return Err(SorrError::Config(format!("delimiter '{}' is not ASCII", self.delimiter)));
        }
        Ok(CsvSchema {
            mode: self.mode.clone(),
            label_column: self.label_column.clone(),
            num_labels: self.num_labels,
            delimiter: self.delimiter as u8,
        })
    }

    pub fn load(&self) -> Result<LabeledDataset> {
        let mut ds = load_csv(&self.path, &self.schema()?)?.with_name(self.name.clone());
        ds.meta.class_ratio = self.class_ratio;
        Ok(ds)
    }
}

/// Parses a descriptor file and resolves its data path against the
/// descriptor's directory.
pub fn load_descriptor(path: &Path) -> Result<DatasetDescriptor> {
    let text = fs::read_to_string(path).map_err(|e| SorrError::io(path, e))?;
    let mut d: DatasetDescriptor =
        toml::from_str(&text).map_err(|e| SorrError::Config(format!("{}: {e}", path.display())))?;
    if d.path.is_relative() {
        if let Some(dir) = path.parent() {
            d.path = dir.join(&d.path);
        }
    }
    Ok(d)
}
