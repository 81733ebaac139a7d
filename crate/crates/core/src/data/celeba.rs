//! CelebA list-attribute files and 8-bit binary PGM images.
//!
//! Attribute file layout:
//!
//! ```text
//! 3
//! Male Attractive Smiling
//! 000001.pgm  1 -1  1
//! ...
//! ```
//!
//! Values are `-1`/`1` and are stored as bits 0/1.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{write_atomic, Dataset, Example};
use crate::nets::IMAGE_SIZE;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const ATTR_FILE_NAME: &str = "list_attr_celeba.txt";

/// Parsed attribute file, rows in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrTable {
    names: Vec<String>,
    rows: Vec<(String, Vec<u8>)>,
    index: HashMap<String, usize>,
}

impl AttrTable {
    pub fn new(names: Vec<String>, rows: Vec<(String, Vec<u8>)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (file, bits)) in rows.iter().enumerate() {
            if bits.len() != names.len() {
                return Err(Error::Shape(format!(
                    "row `{file}` has {} values for {} attributes",
                    bits.len(),
                    names.len()
                )));
            }
            if index.insert(file.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate file name `{file}`")));
            }
        }
        Ok(AttrTable { names, rows, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[(String, Vec<u8>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Bit of attribute `attr` for `file`.
    pub fn get(&self, file: &str, attr: &str) -> Option<u8> {
        let row = *self.index.get(file)?;
        Some(self.rows[row].1[self.column(attr)?])
    }
}

fn parse_err(path: &Path, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

pub fn load_attr_file(path: &Path) -> Result<AttrTable> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| parse_err(path, "not UTF-8".into()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let count: usize = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file".into()))?
        .trim()
        .parse()
        .map_err(|_| parse_err(path, "line 1 must be the row count".into()))?;
    let names: Vec<String> = lines
        .next()
        .ok_or_else(|| parse_err(path, "missing attribute-name line".into()))?
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::with_capacity(count);
    for (k, line) in lines.enumerate() {
        let mut tokens = line.split_whitespace();
        let file = tokens.next().expect("non-empty line").to_string();
        let bits = tokens
            .map(|t| match t {
                "1" => Ok(1),
                "-1" => Ok(0),
                other => Err(parse_err(
                    path,
                    format!("row {} (`{file}`): value `{other}` is not -1 or 1", k + 1),
                )),
            })
            .collect::<Result<Vec<u8>>>()?;
        if bits.len() != names.len() {
            return Err(parse_err(
                path,
                format!(
                    "row {} (`{file}`): {} values for {} attributes",
                    k + 1,
                    bits.len(),
                    names.len()
                ),
            ));
        }
        rows.push((file, bits));
    }
    if rows.len() != count {
        return Err(parse_err(
            path,
            format!("header declares {count} rows, body has {}", rows.len()),
        ));
    }
    AttrTable::new(names, rows).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_attr_file(path: &Path, table: &AttrTable) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", table.len()).expect("string write");
    writeln!(out, "{}", table.names.join(" ")).expect("string write");
    for (file, bits) in &table.rows {
        out.push_str(file);
        for &b in bits {
            out.push_str(if b == 1 { " 1" } else { " -1" });
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a binary (`P5`) 8-bit PGM of exactly 16×16 pixels, scaled to [0, 1].
pub fn read_pgm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token();
    if magic.as_deref() != Some("P5") {
        return Err(parse_err(path, format!("not a binary PGM (magic {magic:?})")));
    }
    let mut header = [0usize; 3];
    for (slot, what) in header.iter_mut().zip(["width", "height", "maxval"]) {
        *slot = token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, format!("bad {what}")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(parse_err(path, format!("maxval {maxval}, only 8-bit (255) is supported")));
    }
    if (width, height) != (IMAGE_SIZE, IMAGE_SIZE) {
        return Err(Error::Shape(format!(
            "{}: image is {width}×{height}, expected {IMAGE_SIZE}×{IMAGE_SIZE}",
            path.display()
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = bytes.get(pos + 1..).unwrap_or(&[]);
    if raster.len() < width * height {
        return Err(parse_err(path, format!("raster has {} of {} bytes", raster.len(), width * height)));
    }
    let data = raster[..width * height].iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(vec![1, IMAGE_SIZE, IMAGE_SIZE], data)
}

/// Writes a 16×16 image as binary PGM, quantizing to the nearest 1/255.
pub fn write_pgm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    if image.len() != IMAGE_SIZE * IMAGE_SIZE {
        return Err(Error::Shape(format!("cannot write {:?} as a 16×16 PGM", image.shape())));
    }
    let mut out = format!("P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_atomic(path, &out)
}

/// Loads every row of `table` from `image_dir`. The target and protected
/// columns become `y` and `s`; all remaining columns become auxiliary labels.
pub fn load_pgm_dataset(image_dir: &Path, table: &AttrTable, target_name: &str, protected_name: &str) -> Result<Dataset> {
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::InvalidArgument(format!("attribute `{name}` not in table")))
    };
    let (ty, ts) = (col(target_name)?, col(protected_name)?);
    let aux_cols: Vec<usize> = (0..table.names.len()).filter(|&c| c != ty && c != ts).collect();
    let aux_names = aux_cols.iter().map(|&c| table.names[c].clone()).collect();
    let examples = table
        .rows
        .iter()
        .map(|(file, bits)| {
            let path: PathBuf = image_dir.join(file);
            Ok(Example {
                image: read_pgm(&path)?,
                y: bits[ty],
                s: bits[ts],
                aux: aux_cols.iter().map(|&c| bits[c]).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(target_name, protected_name, aux_names, examples)
}

/// Persists a dataset as `NNNNNN.pgm` files plus [`ATTR_FILE_NAME`]; columns
/// are target, protected, then auxiliaries.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut names = vec![dataset.target_name.clone(), dataset.protected_name.clone()];
    names.extend(dataset.aux_names.iter().cloned());
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, ex) in dataset.examples().iter().enumerate() {
        let file = format!("{i:06}.pgm");
        write_pgm(&dir.join(&file), &ex.image)?;
        let mut bits = vec![ex.y, ex.s];
        bits.extend_from_slice(&ex.aux);
        rows.push((file, bits));
    }
    write_attr_file(&dir.join(ATTR_FILE_NAME), &AttrTable::new(names, rows)?)
}

/// Inverse of [`save_dataset`].
pub fn load_dataset_dir(dir: &Path, target_name: &str, protected_name: &str) -> Result<Dataset> {
    let table = load_attr_file(&dir.join(ATTR_FILE_NAME))?;
    load_pgm_dataset(dir, &table, target_name, protected_name)
}
