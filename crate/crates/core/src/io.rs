//! CSV dataset format.
//!
//! Header row; feature columns `f0..f{d-1}` (any column that is not the
//! class/domain/split column is read as a feature, in header order), a
//! `class` column and a `domain` column holding integer indices, and an
//! optional `split` column with values `train`, `val` or `test`. UTF-8,
//! comma-separated, numeric fields unquoted. Floats are written with the
//! shortest representation that parses back to the same bits, so a
//! write/read round trip is exact.

use std::path::Path;

use crate::data::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column layout and cardinality overrides for [`load_dataset_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub class_column: String,
    pub domain_column: String,
    pub split_column: String,
    /// When set and the file has a split column, keep only matching rows.
    pub split_filter: Option<Split>,
    /// Split tag used when no filter applies.
    pub default_split: Split,
    /// Override for the inferred `max index + 1`.
    pub num_classes: Option<usize>,
    /// Override for the inferred `max index + 1`.
    pub num_domains: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            class_column: "class".into(),
            domain_column: "domain".into(),
            split_column: "split".into(),
            split_filter: None,
            default_split: Split::Train,
            num_classes: None,
            num_domains: None,
        }
    }
}

impl CsvSchema {
    pub fn with_split_filter(mut self, split: Split) -> Self {
        self.split_filter = Some(split);
        self
    }
}

/// Load a dataset from CSV, preserving row order.
pub fn load_dataset_csv<T: Scalar>(path: &Path, schema: &CsvSchema) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            row: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();

    let mut class_col = None;
    let mut domain_col = None;
    let mut split_col = None;
    let mut feature_cols = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if name == schema.class_column {
            class_col = Some(i);
        } else if name == schema.domain_column {
            domain_col = Some(i);
        } else if name == schema.split_column {
            split_col = Some(i);
        } else {
            feature_cols.push(i);
        }
    }
    let class_col = class_col.ok_or_else(|| Error::CsvParse {
        row: 0,
        message: format!("missing class column `{}`", schema.class_column),
    })?;
    let domain_col = domain_col.ok_or_else(|| Error::CsvParse {
        row: 0,
        message: format!("missing domain column `{}`", schema.domain_column),
    })?;
    if schema.split_filter.is_some() && split_col.is_none() {
        return Err(Error::CsvParse {
            row: 0,
            message: format!(
                "split filter requested but file has no `{}` column",
                schema.split_column
            ),
        });
    }

    let mut examples = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let row = row_index + 1; // 1-based data row, excluding the header
        let record = record.map_err(|e| Error::CsvParse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        if let (Some(col), Some(filter)) = (split_col, schema.split_filter) {
            let split = Split::parse(record.get(col).unwrap()).map_err(|e| Error::CsvParse {
                row,
                message: e.to_string(),
            })?;
            if split != filter {
                continue;
            }
        }
        let parse_index = |col: usize, what: &str| -> Result<usize> {
            let field = record.get(col).unwrap();
            field.trim().parse::<usize>().map_err(|_| Error::CsvParse {
                row,
                message: format!("non-integer {what} value `{field}`"),
            })
        };
        let class_index = parse_index(class_col, "class")?;
        let domain_index = parse_index(domain_col, "domain")?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let field = record.get(col).unwrap();
            let value = field.trim().parse::<T>().map_err(|_| Error::CsvParse {
                row,
                message: format!(
                    "non-numeric feature value `{}` in column `{}`",
                    field,
                    headers.get(col).unwrap()
                ),
            })?;
            features.push(value);
        }
        examples.push(Example::new(features, class_index, domain_index));
    }

    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let split = schema.split_filter.unwrap_or(schema.default_split);
    let num_classes = schema.num_classes.unwrap_or_else(|| {
        examples
            .iter()
            .map(|e| e.class_index + 1)
            .max()
            .unwrap()
            .max(2)
    });
    let num_domains = schema
        .num_domains
        .unwrap_or_else(|| examples.iter().map(|e| e.domain_index + 1).max().unwrap());
    Dataset::new(examples, num_classes, num_domains, split)
}

/// Write one or more datasets (e.g. train/val/test) into a single CSV file
/// with a split column. All datasets must share a feature dimension.
pub fn write_datasets_csv<T: Scalar>(datasets: &[&Dataset<T>], path: &Path) -> Result<()> {
    let first = datasets.first().ok_or(Error::EmptyDataset)?;
    let dim = first.feature_dim();
    for d in datasets {
        if d.feature_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.feature_dim(),
            });
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.push("class".into());
    header.push("domain".into());
    header.push("split".into());
    writer.write_record(&header)?;
    for data in datasets {
        for ex in data.examples() {
            let mut record: Vec<String> = ex.features.iter().map(|v| format!("{v}")).collect();
            record.push(ex.class_index.to_string());
            record.push(ex.domain_index.to_string());
            record.push(data.split().as_str().into());
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Write a single dataset (still includes the split column).
pub fn write_dataset_csv<T: Scalar>(data: &Dataset<T>, path: &Path) -> Result<()> {
    write_datasets_csv(&[data], path)
}
