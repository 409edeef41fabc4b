//! On-disk dataset format: a plain-text manifest naming one dense CSV per
//! channel, a labels CSV, and a subject-id source.
//!
//! Manifest lines (`#` starts a comment, blank lines ignored):
//!
//! ```text
//! channel <name> <relative-path>    one per channel, in order
//! labels <relative-path>            raw label scores, k x n
//! labels_binary <relative-path>     optional 0/1 matrix, k x n
//! subjects <relative-path-or-row>   see below
//! header true                       optional; CSVs then carry a header line
//! ```
//!
//! `subjects` takes either a path to a text file with one subject id per
//! line, or an unsigned integer naming a 0-based row of the labels CSV that
//! holds subject ids; that row is removed from the label matrix. Relative
//! paths resolve against the manifest's directory. CSV cells are decimal
//! text; every cell must parse to a finite number.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use super::{ChannelBlock, DatasetError, MultiChannelDataset};
use crate::float::{fmt_g17, Float};

struct Manifest {
    channels: Vec<(String, PathBuf)>,
    labels: PathBuf,
    labels_binary: Option<PathBuf>,
    subjects: SubjectSource,
    header: bool,
}

enum SubjectSource {
    File(PathBuf),
    LabelsRow(usize),
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = read_to_string(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let err = |line: usize, reason: String| DatasetError::Manifest {
        file: path.to_path_buf(),
        line,
        reason,
    };
    let mut channels = Vec::new();
    let mut labels = None;
    let mut labels_binary = None;
    let mut subjects = None;
    let mut header = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Accept both `key value` and `key=value` spellings.
        let parts: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == '=')
            .filter(|t| !t.is_empty())
            .collect();
        match parts.as_slice() {
            ["channel", name, rel] => {
                if channels.iter().any(|(c, _)| c == name) {
                    return Err(err(lineno, format!("duplicate channel {name:?}")));
                }
                channels.push((name.to_string(), dir.join(rel)));
            }
            ["labels", rel] => {
                if labels.replace(dir.join(rel)).is_some() {
                    return Err(err(lineno, "duplicate labels entry".into()));
                }
            }
            ["labels_binary", rel] => {
                if labels_binary.replace(dir.join(rel)).is_some() {
                    return Err(err(lineno, "duplicate labels_binary entry".into()));
                }
            }
            ["subjects", spec] => {
                let source = match spec.parse::<usize>() {
                    Ok(row) => SubjectSource::LabelsRow(row),
                    Err(_) => SubjectSource::File(dir.join(spec)),
                };
                if subjects.replace(source).is_some() {
                    return Err(err(lineno, "duplicate subjects entry".into()));
                }
            }
            ["header", value] => {
                header = match *value {
                    "true" => true,
                    "false" => false,
                    other => return Err(err(lineno, format!("header must be true or false, got {other:?}"))),
                };
            }
            _ => return Err(err(lineno, format!("unrecognized line {line:?}"))),
        }
    }
    if channels.is_empty() {
        return Err(err(0, "manifest lists no channels".into()));
    }
    let labels = labels.ok_or_else(|| err(0, "manifest lists no labels file".into()))?;
    let subjects = subjects.ok_or_else(|| err(0, "manifest lists no subjects source".into()))?;
    Ok(Manifest {
        channels,
        labels,
        labels_binary,
        subjects,
        header,
    })
}

fn read_csv_matrix<F: Float>(path: &Path, header: bool) -> Result<Array2<F>, DatasetError> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        if header && idx == 0 {
            continue;
        }
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let value: Option<F> = cell.parse().ok();
            let value = value.filter(|v| v.is_finite());
            match value {
                Some(v) => row.push(v),
                None => {
                    return Err(DatasetError::Parse {
                        file: path.to_path_buf(),
                        row: idx + 1,
                        col: col + 1,
                        text: cell.to_string(),
                    })
                }
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(DatasetError::DimensionMismatch {
                    file: path.to_path_buf(),
                    expected: w,
                    found: row.len(),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let ncols = width.unwrap_or(0);
    if rows.is_empty() || ncols == 0 {
        return Err(DatasetError::Invalid(format!(
            "{}: empty matrix",
            path.display()
        )));
    }
    let flat: Vec<F> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| DatasetError::Invalid(format!("{}: {e}", path.display())))
}

/// Loads a dataset from a manifest file. Channels appear in manifest order,
/// raw label scores are retained as-is, and no binarization is applied unless
/// the manifest names a `labels_binary` matrix.
pub fn load_dataset<F: Float>(manifest: &Path) -> Result<MultiChannelDataset<F>, DatasetError> {
    let spec = parse_manifest(manifest)?;
    let mut labels: Array2<F> = read_csv_matrix(&spec.labels, spec.header)?;
    let n = labels.ncols();

    let subject_ids: Vec<String> = match &spec.subjects {
        SubjectSource::File(path) => {
            let text = read_to_string(path)?;
            let ids: Vec<String> = text
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if ids.len() != n {
                return Err(DatasetError::DimensionMismatch {
                    file: path.clone(),
                    expected: n,
                    found: ids.len(),
                });
            }
            ids
        }
        SubjectSource::LabelsRow(row) => {
            if *row >= labels.nrows() {
                return Err(DatasetError::Invalid(format!(
                    "subjects row {row} out of range for {} label rows",
                    labels.nrows()
                )));
            }
            let ids = labels
                .row(*row)
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>();
            let keep: Vec<usize> = (0..labels.nrows()).filter(|r| r != row).collect();
            labels = labels.select(Axis(0), &keep);
            ids
        }
    };

    let mut channels = Vec::with_capacity(spec.channels.len());
    for (name, path) in &spec.channels {
        let features: Array2<F> = read_csv_matrix(path, spec.header)?;
        if features.ncols() != n {
            return Err(DatasetError::DimensionMismatch {
                file: path.clone(),
                expected: n,
                found: features.ncols(),
            });
        }
        channels.push(ChannelBlock {
            name: name.clone(),
            features,
        });
    }

    let dataset = MultiChannelDataset::new(channels, labels, subject_ids)?;
    match &spec.labels_binary {
        None => Ok(dataset),
        Some(path) => {
            let raw: Array2<F> = read_csv_matrix(path, spec.header)?;
            if raw.dim() != dataset.labels_raw().dim() {
                return Err(DatasetError::DimensionMismatch {
                    file: path.clone(),
                    expected: dataset.n(),
                    found: raw.ncols(),
                });
            }
            let mut binary = Array2::from_elem(raw.dim(), false);
            for ((r, c), v) in raw.indexed_iter() {
                if *v == F::one() {
                    binary[[r, c]] = true;
                } else if *v != F::zero() {
                    return Err(DatasetError::Parse {
                        file: path.clone(),
                        row: r + 1,
                        col: c + 1,
                        text: format!("{v}"),
                    });
                }
            }
            Ok(dataset.with_binary(binary))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn matrix_to_csv<F: Float>(m: &Array2<F>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let mut first = true;
        for &v in row.iter() {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_g17(v));
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Writes a dataset into `dir` as `manifest.txt`, one `<name>.csv` per
/// channel, `labels.csv`, `subjects.txt`, and `labels_binary.csv` when the
/// dataset carries binarized labels. Values use 17 significant digits so a
/// reload reproduces the matrices bit-exactly. Returns the manifest path.
pub fn save_dataset<F: Float>(
    dataset: &MultiChannelDataset<F>,
    dir: &Path,
) -> Result<PathBuf, DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::new();
    for block in dataset.channels() {
        let file = format!("{}.csv", block.name);
        write_file(&dir.join(&file), &matrix_to_csv(&block.features))?;
        let _ = writeln!(manifest, "channel {} {}", block.name, file);
    }
    write_file(&dir.join("labels.csv"), &matrix_to_csv(dataset.labels_raw()))?;
    let _ = writeln!(manifest, "labels labels.csv");
    let subjects: String = dataset
        .subject_ids()
        .iter()
        .map(|s| format!("{s}\n"))
        .collect();
    write_file(&dir.join("subjects.txt"), &subjects)?;
    let _ = writeln!(manifest, "subjects subjects.txt");
    if let Some(binary) = dataset.labels_binary() {
        let mut out = String::new();
        for row in binary.rows() {
            let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        write_file(&dir.join("labels_binary.csv"), &out)?;
        let _ = writeln!(manifest, "labels_binary labels_binary.csv");
    }
    let path = dir.join("manifest.txt");
    write_file(&path, &manifest)?;
    Ok(path)
}
