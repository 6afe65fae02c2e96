//! CSV ingestion: header row, comma-delimited, one label column whose tokens
//! are configurable, every other column a decimal feature.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledDataset};
use crate::label::LabelState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTokens {
    pub positive: String,
    pub negative: String,
    pub unlabeled: String,
}

impl Default for LabelTokens {
    fn default() -> Self {
        Self {
            positive: "pos".into(),
            negative: "neg".into(),
            unlabeled: "?".into(),
        }
    }
}

impl LabelTokens {
    fn parse(&self, token: &str) -> Option<LabelState> {
        let token = token.trim();
        if token == self.positive {
            Some(LabelState::Positive)
        } else if token == self.negative {
            Some(LabelState::Negative)
        } else if token == self.unlabeled {
            Some(LabelState::Unlabeled)
        } else {
            None
        }
    }

    fn token(&self, state: LabelState) -> &str {
        match state {
            LabelState::Positive => &self.positive,
            LabelState::Negative => &self.negative,
            LabelState::Unlabeled => &self.unlabeled,
        }
    }
}

/// Reads a dataset. Line numbers in errors are 1-based and count the header.
pub fn load_csv(path: &Path, label_column: &str, tokens: &LabelTokens) -> Result<LabeledDataset, DataError> {
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::BadParam(format!("no column named {label_column:?}")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(DataError::BadParam("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(DataError::ParseError {
                line,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let state = tokens.parse(cell).ok_or_else(|| DataError::UnknownLabelToken {
                    line,
                    token: cell.to_string(),
                })?;
                labels.push(state);
            } else {
                let v: f64 = cell.parse().map_err(|_| DataError::ParseError {
                    line,
                    column: col + 1,
                    message: format!("{cell:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(DataError::ParseError {
                        line,
                        column: col + 1,
                        message: format!("{cell:?} is not finite"),
                    });
                }
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let features = Array2::from_shape_vec((labels.len(), feature_names.len()), values)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    LabeledDataset::with_feature_names(features, labels, feature_names, path.display().to_string())
}

/// Writes a dataset with the label column last.
pub fn save_csv(
    dataset: &LabeledDataset,
    path: &Path,
    label_column: &str,
    tokens: &LabelTokens,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    writer.write_record(&header)?;
    let features = dataset.features();
    for (row, &state) in features.rows().into_iter().zip(dataset.label_states()) {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        fields.push(tokens.token(state).to_string());
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_two_moons;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn three_rows_with_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "a,b,label\n1,2,pos\n3,4,neg\n5,6,?\n");
        let ds = load_csv(&path, "label", &LabelTokens::default()).unwrap();
        assert_eq!((ds.n(), ds.m(), ds.p()), (3, 2, 2));
        assert_eq!(ds.label_states()[2], LabelState::Unlabeled);
    }

    #[test]
    fn crlf_and_label_in_middle() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "b.csv", "a,label,b\r\n1.5,pos,2\r\n-3e2,neg,4\r\n");
        let ds = load_csv(&path, "label", &LabelTokens::default()).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.features()[[1, 0]], -300.0);
        assert_eq!(ds.features()[[0, 1]], 2.0);
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "c.csv", "a,b,label\n1,2,pos\n3,oops,neg\n");
        match load_csv(&path, "label", &LabelTokens::default()) {
            Err(DataError::ParseError { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_token_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "d.csv", "a,label\n1,maybe\n");
        assert!(matches!(
            load_csv(&path, "label", &LabelTokens::default()),
            Err(DataError::UnknownLabelToken { line: 2, .. })
        ));
        let path = write(&dir, "e.csv", "a,label\n");
        assert!(matches!(
            load_csv(&path, "label", &LabelTokens::default()),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), "label", &LabelTokens::default());
        assert!(err.is_err());
    }

    #[test]
    fn save_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_two_moons(50, 0.2, 3).unwrap();
        let mut states = ds.label_states().to_vec();
        states[7] = LabelState::Unlabeled;
        let ds = ds.with_labels(states).unwrap();
        let tokens = LabelTokens {
            positive: "yes".into(),
            negative: "no".into(),
            unlabeled: "".into(),
        };
        let path = dir.path().join("rt.csv");
        save_csv(&ds, &path, "y", &tokens).unwrap();
        let back = load_csv(&path, "y", &tokens).unwrap();
        assert_eq!(back, ds);
    }
}
