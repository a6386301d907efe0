//! Dataset ingestion: CSV feature tables and IDX image/label pairs.

use crate::config::DatasetFormat;
use byteorder::{BigEndian, ReadBytesExt};
use robustbench_core::tensor::{Bounds, InputTensor, Label};
use std::io::Read;
use std::path::{Path, PathBuf};
use thiserror::Error;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: magic number {actual:#010x} does not match the expected {expected:#010x}")]
    MagicMismatch {
        path: PathBuf,
        expected: u32,
        actual: u32,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("no labels file: {0}")]
    MissingLabels(String),
}

/// Loaded samples plus the source details echoed into the report.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<InputTensor>,
    pub labels: Vec<Label>,
    pub source: DatasetSource,
}

#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub format: DatasetFormat,
    pub count: usize,
}

/// Reads a dataset. CSV features are taken verbatim; IDX bytes are scaled
/// onto `bounds` by `x * (max - min) / 255 + min`. For IDX, the labels file
/// is `labels_path` when given, otherwise derived from the images path (or
/// found next to it in a directory).
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    labels_path: Option<&Path>,
    bounds: Bounds,
) -> Result<Dataset, DatasetError> {
    match format {
        DatasetFormat::Csv => load_csv(path),
        DatasetFormat::Idx => load_idx(path, labels_path, bounds),
    }
}

fn load_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let parse_error = |message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DatasetError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => parse_error(e.to_string()),
        })?;

    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(e.to_string()))?;
        let first = record
            .get(0)
            .ok_or_else(|| parse_error(format!("row {row} is empty")))?;
        // a non-numeric first cell in the first row marks a header
        if row == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label: usize = first
            .parse()
            .map_err(|_| parse_error(format!("row {row}: label {first:?} is not a non-negative integer")))?;
        let features = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    parse_error(format!("row {row}, column {}: {cell:?} is not a number", col + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if features.is_empty() {
            return Err(parse_error(format!("row {row} has a label but no features")));
        }
        let input = InputTensor::from_vec(features).map_err(|e| parse_error(e.to_string()))?;
        if let Some(previous) = inputs.first() {
            let previous: &InputTensor = previous;
            if previous.shape() != input.shape() {
                return Err(parse_error(format!(
                    "row {row} has {} features, the first row has {}",
                    input.len(),
                    previous.len()
                )));
            }
        }
        inputs.push(input);
        labels.push(Label(label));
    }
    let count = inputs.len();
    Ok(Dataset {
        inputs,
        labels,
        source: DatasetSource {
            path: path.to_path_buf(),
            labels_path: None,
            format: DatasetFormat::Csv,
            count,
        },
    })
}

fn load_idx(
    path: &Path,
    labels_path: Option<&Path>,
    bounds: Bounds,
) -> Result<Dataset, DatasetError> {
    let (images_path, labels_path) = match labels_path {
        Some(labels) => (path.to_path_buf(), labels.to_path_buf()),
        None => resolve_idx_pair(path)?,
    };
    let (inputs, image_count) = read_idx_images(&images_path, bounds)?;
    let labels = read_idx_labels(&labels_path)?;
    if image_count != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: image_count,
            labels: labels.len(),
        });
    }
    Ok(Dataset {
        inputs,
        labels,
        source: DatasetSource {
            path: images_path,
            labels_path: Some(labels_path),
            format: DatasetFormat::Idx,
            count: image_count,
        },
    })
}

/// Finds the images/labels pair: a directory must contain exactly one
/// `idx3` and one `idx1` file; an images file maps to its labels file by
/// the `images`→`labels`, `idx3`→`idx1` naming convention.
fn resolve_idx_pair(path: &Path) -> Result<(PathBuf, PathBuf), DatasetError> {
    if path.is_dir() {
        let entries = std::fs::read_dir(path)
            .map_err(|source| DatasetError::Io {
                path: path.to_path_buf(),
                source,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .collect::<Vec<_>>();
        let matching = |tag: &str| {
            let found: Vec<&PathBuf> = entries
                .iter()
                .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().contains(tag)))
                .collect();
            match found.as_slice() {
                [one] => Ok((*one).clone()),
                [] => Err(DatasetError::MissingLabels(format!(
                    "directory {} contains no {tag} file",
                    path.display()
                ))),
                _ => Err(DatasetError::MissingLabels(format!(
                    "directory {} contains more than one {tag} file",
                    path.display()
                ))),
            }
        };
        return Ok((matching("idx3")?, matching("idx1")?));
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let derived = name.replace("images", "labels").replace("idx3", "idx1");
    if derived == name {
        return Err(DatasetError::MissingLabels(format!(
            "cannot derive a labels path from {}; pass labels_path explicitly",
            path.display()
        )));
    }
    Ok((path.to_path_buf(), path.with_file_name(derived)))
}

fn open_idx(path: &Path, expected_magic: u32, dims: usize) -> Result<(Vec<usize>, Vec<u8>), DatasetError> {
    let io_error = |source: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::open(path).map_err(io_error)?;
    let magic = file.read_u32::<BigEndian>().map_err(io_error)?;
    if magic != expected_magic {
        return Err(DatasetError::MagicMismatch {
            path: path.to_path_buf(),
            expected: expected_magic,
            actual: magic,
        });
    }
    let mut sizes = Vec::with_capacity(dims);
    for _ in 0..dims {
        sizes.push(file.read_u32::<BigEndian>().map_err(io_error)? as usize);
    }
    let expected_len: usize = sizes.iter().product();
    let mut data = Vec::with_capacity(expected_len);
    file.read_to_end(&mut data).map_err(io_error)?;
    if data.len() != expected_len {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            message: format!(
                "dimensions {sizes:?} require {expected_len} data bytes, found {}",
                data.len()
            ),
        });
    }
    Ok((sizes, data))
}

fn read_idx_images(path: &Path, bounds: Bounds) -> Result<(Vec<InputTensor>, usize), DatasetError> {
    let (sizes, data) = open_idx(path, IDX_IMAGES_MAGIC, 3)?;
    let (n, h, w) = (sizes[0], sizes[1], sizes[2]);
    let scale = bounds.range() / 255.0;
    let inputs = data
        .chunks(h * w)
        .map(|pixels| {
            let values = pixels
                .iter()
                .map(|&b| f64::from(b) * scale + bounds.min())
                .collect();
            InputTensor::new(values, vec![h, w]).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((inputs, n))
}

fn read_idx_labels(path: &Path) -> Result<Vec<Label>, DatasetError> {
    let (_, data) = open_idx(path, IDX_LABELS_MAGIC, 1)?;
    Ok(data.into_iter().map(|b| Label(b as usize)).collect())
}
