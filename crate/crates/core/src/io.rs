//! On-disk formats: key-value manifests, edge lists, label files and the
//! binary feature-matrix container.
//!
//! Feature matrices use a fixed little-endian layout:
//!
//! ```text
//! offset 0   "MMAGF01\n"            8-byte magic
//! offset 8   rows                   u64 LE
//! offset 16  cols                   u64 LE
//! offset 24  rows*cols f32 LE       row-major payload
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{ModalityFeatures, MultimodalGraph};

pub const FEATURE_MAGIC: &[u8; 8] = b"MMAGF01\n";

/// Ordered `key = value` entries parsed from a manifest or config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.push((key, value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses `key` with `FromStr`, reporting the key on failure.
    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidArgument(format!("bad value for `{key}`: `{raw}`"))),
        }
    }
}

/// Reads a feature matrix verbatim (NaN entries are preserved).
pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::BadHeader {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 24 {
        return Err(bad(format!("file has {} bytes, header needs 24", bytes.len())));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("wrong magic bytes".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| bad("dimension overflow".into()))?;
    if (bytes.len() - 24) as u64 != count {
        return Err(bad(format!(
            "payload has {} bytes, header declares {rows}x{cols}",
            bytes.len() - 24
        )));
    }
    let values: Vec<f32> = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows as usize, cols as usize), values).expect("sized above"))
}

pub fn write_features(path: &Path, data: &Array2<f32>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    emit(FEATURE_MAGIC)?;
    emit(&(data.nrows() as u64).to_le_bytes())?;
    emit(&(data.ncols() as u64).to_le_bytes())?;
    for v in data.iter() {
        emit(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Replaces NaN entries with the mean of the finite entries of their column
/// (0 when a column has no finite entry). Returns the number of imputed cells.
pub fn impute_nan_with_column_mean(data: &mut Array2<f32>) -> usize {
    let mut imputed = 0;
    for mut col in data.columns_mut() {
        let (sum, count) = col
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0f64, 0usize), |(s, c), &v| (s + f64::from(v), c + 1));
        let mean = if count == 0 { 0.0 } else { (sum / count as f64) as f32 };
        for v in col.iter_mut().filter(|v| v.is_nan()) {
            *v = mean;
            imputed += 1;
        }
    }
    imputed
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(format!("expected `u v`, got `{line}`")));
        };
        let u = u
            .parse()
            .map_err(|_| parse_err(format!("bad node id `{u}`")))?;
        let v = v
            .parse()
            .map_err(|_| parse_err(format!("bad node id `{v}`")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Reads one label per line; `-1` marks an unknown label.
pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let value: i64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("bad label `{line}`"),
        })?;
        labels.push(match value {
            -1 => None,
            v if v >= 0 => Some(v as usize),
            v => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("negative label {v}"),
                })
            }
        });
    }
    Ok(labels)
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads and validates a dataset described by a manifest.
///
/// Manifest keys: `edges`, `labels` (optional), `modality.<name>.features`
/// (one per modality, in file order) and `clusters` (optional K). Relative
/// paths resolve against the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<MultimodalGraph> {
    let kv = KeyValues::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let missing = |key: &str| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: 0,
        message: format!("missing key `{key}`"),
    };

    let mut modalities = Vec::new();
    for (key, value) in kv.iter() {
        if let Some(name) = key
            .strip_prefix("modality.")
            .and_then(|rest| rest.strip_suffix(".features"))
        {
            let mut data = read_features(&resolve(base, value))?;
            impute_nan_with_column_mean(&mut data);
            modalities.push(ModalityFeatures::new(name, data));
        }
    }
    let Some(first) = modalities.first() else {
        return Err(missing("modality.<name>.features"));
    };
    let n = first.data.nrows();

    let edges = read_edges(&resolve(base, kv.get("edges").ok_or_else(|| missing("edges"))?))?;
    let labels = kv
        .get("labels")
        .map(|p| read_labels(&resolve(base, p)))
        .transpose()?;
    let k: Option<usize> = kv.parse_value("clusters")?;
    Ok(MultimodalGraph::new(n, edges, modalities, labels)?.with_num_clusters(k))
}

/// Writes `g` as manifest + edge list + labels + one feature file per
/// modality into `dir`. Returns the manifest path.
pub fn save_dataset(g: &MultimodalGraph, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut kv = KeyValues::default();

    let edges_path = dir.join("edges.txt");
    let mut edges = String::from("# undirected edge list, one `u v` pair per line\n");
    for (u, v) in g.adjacency().edges() {
        edges.push_str(&format!("{u} {v}\n"));
    }
    fs::write(&edges_path, edges).map_err(|e| Error::io(&edges_path, e))?;
    kv.push("edges", "edges.txt");

    if let Some(labels) = g.labels() {
        let path = dir.join("labels.txt");
        let text: String = labels
            .iter()
            .map(|l| match l {
                Some(v) => format!("{v}\n"),
                None => "-1\n".to_string(),
            })
            .collect();
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        kv.push("labels", "labels.txt");
    }

    for m in g.modalities() {
        let file = format!("{}.bin", m.name);
        write_features(&dir.join(&file), &m.data)?;
        kv.push(format!("modality.{}.features", m.name), file);
    }
    if let Some(k) = g.num_clusters() {
        kv.push("clusters", k);
    }

    let manifest = dir.join("manifest.txt");
    fs::write(&manifest, kv.render()).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
