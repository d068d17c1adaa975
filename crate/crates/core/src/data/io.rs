//! Plain CSV dataset directories: `view_0.csv … view_{V-1}.csv` (one row per
//! sample, comma-separated reals, no header) and `labels.csv` (one integer
//! per line).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::MultiViewDataset;
use crate::error::{DataError, FamlError, Result};

pub const LABELS_FILE: &str = "labels.csv";

fn view_path(dir: &Path, v: usize) -> PathBuf {
    dir.join(format!("view_{v}.csv"))
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => FamlError::io(path, io),
            other => DataError::Malformed(format!("{}: {other:?}", path.display())).into(),
        })?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| DataError::Malformed(format!("{} line {line}: {e}", path.display())))?;
        let got = record.len();
        match width {
            None => width = Some(got),
            Some(expected) if expected != got => {
                return Err(DataError::Ragged {
                    file: path.to_path_buf(),
                    line,
                    expected,
                    got,
                }
                .into())
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                DataError::NonNumeric {
                    file: path.to_path_buf(),
                    line,
                    column: j + 1,
                    cell: cell.to_string(),
                }
            })?;
            data.push(value);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((rows, width), data)
        .map_err(|e| DataError::Malformed(format!("{}: {e}", path.display())).into())
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| FamlError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                DataError::NonNumeric {
                    file: path.to_path_buf(),
                    line: i + 1,
                    column: 1,
                    cell: l.trim().to_string(),
                }
                .into()
            })
        })
        .collect()
}

/// Largest `v` among the `view_<v>.csv` files in `dir`.
fn highest_view_index(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| FamlError::io(dir, e))?;
    let mut highest = 0;
    for entry in entries {
        let entry = entry.map_err(|e| FamlError::io(dir, e))?;
        let name = entry.file_name();
        let index = name
            .to_str()
            .and_then(|n| n.strip_prefix("view_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(v) = index {
            highest = highest.max(v);
        }
    }
    Ok(highest)
}

/// Loads every `view_<v>.csv` in order plus `labels.csv`; a gap in the view
/// numbering is reported as a missing file. When `num_classes`
/// is `None` it is inferred as `max label + 1`.
pub fn load_multiview(dir: &Path, num_classes: Option<usize>) -> Result<MultiViewDataset> {
    let first = view_path(dir, 0);
    if !first.is_file() {
        return Err(DataError::MissingFile(first).into());
    }
    let labels_path = dir.join(LABELS_FILE);
    if !labels_path.is_file() {
        return Err(DataError::MissingFile(labels_path).into());
    }
    let highest = highest_view_index(dir)?;
    let paths: Vec<PathBuf> = (0..=highest).map(|v| view_path(dir, v)).collect();
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(DataError::MissingFile(missing.clone()).into());
    }
    let views = paths.iter().map(|p| read_matrix(p)).collect::<Result<Vec<_>>>()?;
    let labels = read_labels(&labels_path)?;

    for (p, m) in paths.iter().zip(&views) {
        if m.nrows() != views[0].nrows() {
            return Err(DataError::RowMismatch {
                file_a: paths[0].clone(),
                rows_a: views[0].nrows(),
                file_b: p.clone(),
                rows_b: m.nrows(),
            }
            .into());
        }
    }
    if labels.len() != views[0].nrows() {
        return Err(DataError::RowMismatch {
            file_a: paths[0].clone(),
            rows_a: views[0].nrows(),
            file_b: labels_path,
            rows_b: labels.len(),
        }
        .into());
    }
    let k = match num_classes {
        Some(k) => {
            if let Some((i, &y)) = labels.iter().enumerate().find(|(_, y)| **y >= k) {
                return Err(DataError::LabelOutOfRange {
                    file: labels_path,
                    line: i + 1,
                    label: y,
                    num_classes: k,
                }
                .into());
            }
            k
        }
        None => labels.iter().max().map_or(0, |m| m + 1),
    };
    MultiViewDataset::new(views, labels, k)
}

/// Writes a dataset in the layout read by [`load_multiview`]. Values are
/// printed in shortest round-trip form, so a reload is exact.
pub fn save_multiview(ds: &MultiViewDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FamlError::io(dir, e))?;
    for (v, m) in ds.views().iter().enumerate() {
        let path = view_path(dir, v);
        let mut out = String::new();
        for row in m.rows() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        fs::write(&path, out).map_err(|e| FamlError::io(&path, e))?;
    }
    let path = dir.join(LABELS_FILE);
    let mut file = fs::File::create(&path).map_err(|e| FamlError::io(&path, e))?;
    for y in ds.labels() {
        writeln!(file, "{y}").map_err(|e| FamlError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn parses_toy_directory() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "view_0.csv", "1,2\n3,4\n5,6\n");
        write(dir.path(), "view_1.csv", "1,2,3\n4,5,6\n7,8,9\n");
        write(dir.path(), "labels.csv", "0\n1\n1\n");
        let ds = load_multiview(dir.path(), None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_views(), 2);
        assert_eq!(ds.view_dims(), vec![2, 3]);
        assert_eq!(ds.class_counts(), &[1, 2]);
    }

    #[test]
    fn row_mismatch_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "view_0.csv", "1,2\n3,4\n5,6\n");
        write(dir.path(), "view_1.csv", "1\n2\n");
        write(dir.path(), "labels.csv", "0\n1\n1\n");
        let err = load_multiview(dir.path(), None).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, FamlError::Data(DataError::RowMismatch { .. })));
        assert!(msg.contains("view_0.csv") && msg.contains("view_1.csv"), "{msg}");
    }

    #[test]
    fn distinct_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_multiview(dir.path(), None).unwrap_err();
        assert!(matches!(err, FamlError::Data(DataError::MissingFile(ref p)) if p.ends_with("view_0.csv")));

        write(dir.path(), "view_0.csv", "1,2\n3,x\n");
        let err = load_multiview(dir.path(), None).unwrap_err();
        assert!(matches!(err, FamlError::Data(DataError::MissingFile(ref p)) if p.ends_with("labels.csv")));

        write(dir.path(), "labels.csv", "0\n1\n");
        let err = load_multiview(dir.path(), None).unwrap_err();
        assert!(matches!(
            err,
            FamlError::Data(DataError::NonNumeric { line: 2, column: 2, .. })
        ));

        write(dir.path(), "view_0.csv", "1,2\n3\n");
        let err = load_multiview(dir.path(), None).unwrap_err();
        assert!(matches!(err, FamlError::Data(DataError::Ragged { line: 2, .. })));

        write(dir.path(), "view_0.csv", "1,2\n3,4\n");
        write(dir.path(), "labels.csv", "0\n4\n");
        let err = load_multiview(dir.path(), Some(3)).unwrap_err();
        assert!(matches!(err, FamlError::Data(DataError::LabelOutOfRange { label: 4, line: 2, .. })));
    }

    #[test]
    fn write_then_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = MultiViewDataset::new(
            vec![
                array![[0.1, 1.0 / 3.0], [-2.5e-17, 1e300], [std::f64::consts::PI, -0.0]],
                array![[7.0], [8.000000000000002], [9.0]],
            ],
            vec![2, 0, 1],
            3,
        )
        .unwrap();
        save_multiview(&ds, dir.path()).unwrap();
        let back = load_multiview(dir.path(), Some(3)).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.views().iter().zip(ds.views()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
