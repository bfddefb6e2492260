//! Text formats for dictionaries, dense matrices and saved models.
//!
//! Dictionary file: a `K d` header line, then one basis per line as `d`
//! comma-separated values. Floats are written with round-trip precision.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LsgcError, Result};
use crate::lsgc::LsgcModel;
use crate::types::{Dictionary, DictionaryMeta, EncoderConfig, RelationMatrix};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> LsgcError {
    LsgcError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| LsgcError::io(path, e))?,
    ))
}

pub fn write_dictionary<W: Write>(mut out: W, dict: &Dictionary) -> std::io::Result<()> {
    writeln!(out, "{} {}", dict.k(), dict.dim())?;
    for b in dict.iter() {
        writeln!(out, "{}", join(b.iter().copied()))?;
    }
    Ok(())
}

pub fn save_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    let mut w = create(path)?;
    write_dictionary(&mut w, dict).map_err(|e| LsgcError::io(path, e))?;
    w.flush().map_err(|e| LsgcError::io(path, e))
}

fn read_rows(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| LsgcError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LsgcError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_row(path: &Path, line: usize, text: &str, width: usize) -> Result<Vec<f64>> {
    let cells: Vec<&str> = text.split(',').collect();
    if cells.len() != width {
        return Err(parse_err(
            path,
            line,
            format!("expected {width} values, found {}", cells.len()),
        ));
    }
    cells
        .iter()
        .map(|c| {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric value '{}'", c.trim())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, line, "non-finite value"))
            }
        })
        .collect()
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let rows = read_rows(path)?;
    let (hline, header) = rows.first().ok_or(LsgcError::EmptyDataset)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (k, d) = match parts.as_slice() {
        [k, d] => (
            k.parse::<usize>()
                .map_err(|_| parse_err(path, *hline, "bad K in header"))?,
            d.parse::<usize>()
                .map_err(|_| parse_err(path, *hline, "bad d in header"))?,
        ),
        _ => return Err(parse_err(path, *hline, "header must be 'K d'")),
    };
    if rows.len() - 1 != k {
        return Err(parse_err(
            path,
            *hline,
            format!("header declares {k} bases, file has {}", rows.len() - 1),
        ));
    }
    let mut bases = Vec::with_capacity(k * d);
    for (line, text) in &rows[1..] {
        bases.extend(parse_row(path, *line, text, d)?);
    }
    Dictionary::new(d, bases)
}

/// Dense matrix as CSV, one row per line.
pub fn write_matrix<W: Write>(mut out: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in m.row_iter() {
        writeln!(out, "{}", join(r.iter().copied()))?;
    }
    Ok(())
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    write_matrix(&mut w, m).map_err(|e| LsgcError::io(path, e))?;
    w.flush().map_err(|e| LsgcError::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let (_, first) = rows.first().ok_or(LsgcError::EmptyDataset)?;
    let width = first.split(',').count();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, text) in &rows {
        values.extend(parse_row(path, *line, text, width)?);
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &values))
}

/// Rows of code vectors written as a matrix file.
pub fn save_codes(path: &Path, codes: &[Vec<f64>]) -> Result<()> {
    let mut w = create(path)?;
    for c in codes {
        writeln!(w, "{}", join(c.iter().copied())).map_err(|e| LsgcError::io(path, e))?;
    }
    w.flush().map_err(|e| LsgcError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    config: EncoderConfig,
    dictionary_meta: DictionaryMeta,
    dictionary: String,
    relation: String,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Save `path` (JSON config block) plus `path.dict` and `path.relation` beside it.
pub fn save_model(path: &Path, model: &LsgcModel) -> Result<()> {
    let dict_path = sibling(path, ".dict");
    let rel_path = sibling(path, ".relation");
    save_dictionary(&dict_path, model.dictionary())?;
    save_matrix(&rel_path, model.relation().weights())?;
    let manifest = ModelManifest {
        config: model.config().clone(),
        dictionary_meta: model.dictionary().meta.clone(),
        dictionary: dict_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
        relation: rel_path.file_name().unwrap().to_string_lossy().into_owned(),
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w).map_err(|e| LsgcError::io(path, e))?;
    w.flush().map_err(|e| LsgcError::io(path, e))
}

/// Load a model saved by [`save_model`]; the transition power is recomputed.
pub fn load_model(path: &Path) -> Result<LsgcModel> {
    let text = fs::read_to_string(path).map_err(|e| LsgcError::io(path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut dict = load_dictionary(&dir.join(&manifest.dictionary))?;
    dict.meta = manifest.dictionary_meta;
    let relation = RelationMatrix::from_symmetric(load_matrix(&dir.join(&manifest.relation))?)?;
    LsgcModel::from_parts(dict, manifest.config, relation)
}
