//! Dataset generation, loading and preprocessing.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LsgcError, Result};
use crate::types::DataMatrix;

/// Regression target as a function of normalized arc length `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpiralTarget {
    /// `sin(2π·cycles·s)`
    Sine { cycles: f64 },
    /// `s`
    ArcLength,
}

/// Archimedean spiral `r = a + bθ` sampled uniformly in arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralSpec {
    pub n_points: usize,
    pub turns: f64,
    /// Radius at θ = 0.
    pub inner_radius: f64,
    /// Radial distance between consecutive arms (`2π·b`).
    pub arm_gap: f64,
    pub noise: f64,
    pub target: SpiralTarget,
    pub seed: u64,
}

impl Default for SpiralSpec {
    fn default() -> Self {
        SpiralSpec {
            n_points: 10_000,
            turns: 3.0,
            inner_radius: 4.0,
            arm_gap: 1.0,
            noise: 0.1,
            target: SpiralTarget::Sine { cycles: 2.0 },
            seed: 0,
        }
    }
}

impl SpiralSpec {
    fn growth(&self) -> f64 {
        self.arm_gap / (2.0 * std::f64::consts::PI)
    }

    fn theta_max(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.turns
    }

    /// Arc length from θ = 0 to `theta`.
    pub fn arc_length(&self, theta: f64) -> f64 {
        let (a, b) = (self.inner_radius, self.growth());
        if b == 0.0 {
            return a * theta;
        }
        let prim = |th: f64| {
            let r = a + b * th;
            let h = (r * r + b * b).sqrt();
            (r * h + b * b * (r + h).ln()) / (2.0 * b)
        };
        prim(theta) - prim(0.0)
    }

    /// Angle at which the normalized arc length equals `s`.
    pub fn theta_at(&self, s: f64) -> f64 {
        let total = self.arc_length(self.theta_max());
        let goal = s * total;
        let (mut lo, mut hi) = (0.0, self.theta_max());
        // arc length is strictly increasing; 100 halvings reach machine precision
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.arc_length(mid) < goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn point_at(&self, theta: f64) -> [f64; 2] {
        let r = self.inner_radius + self.growth() * theta;
        [r * theta.cos(), r * theta.sin()]
    }

    pub fn target_at(&self, s: f64) -> f64 {
        match self.target {
            SpiralTarget::Sine { cycles } => (2.0 * std::f64::consts::PI * cycles * s).sin(),
            SpiralTarget::ArcLength => s,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 1 {
            return Err(LsgcError::contract("spiral needs at least one point"));
        }
        if !(self.noise >= 0.0)
            || !(self.turns > 0.0)
            || !(self.arm_gap >= 0.0)
            || !(self.inner_radius >= 0.0)
        {
            return Err(LsgcError::contract(
                "spiral needs noise >= 0, turns > 0, arm_gap >= 0, inner_radius >= 0",
            ));
        }
        if self.inner_radius == 0.0 && self.arm_gap == 0.0 {
            return Err(LsgcError::contract(
                "degenerate spiral: zero radius and zero gap",
            ));
        }
        Ok(())
    }
}

/// 2-D spiral samples with targets; also returns each sample's arc-length parameter.
pub fn gen_spiral_with_params(spec: &SpiralSpec) -> Result<(DataMatrix, Vec<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| LsgcError::contract(e.to_string()))?;
    let mut values = Vec::with_capacity(2 * spec.n_points);
    let mut targets = Vec::with_capacity(spec.n_points);
    let mut params = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let s: f64 = rng.random();
        let [px, py] = spec.point_at(spec.theta_at(s));
        let (ex, ey) = if spec.noise > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        values.push(px + ex);
        values.push(py + ey);
        targets.push(spec.target_at(s));
        params.push(s);
    }
    let data = DataMatrix::new(spec.n_points, 2, values)?.with_targets(targets)?;
    Ok((data, params))
}

pub fn gen_spiral(spec: &SpiralSpec) -> Result<DataMatrix> {
    Ok(gen_spiral_with_params(spec)?.0)
}

/// Two interleaved spirals (the second rotated by π), labeled 0 and 1.
pub fn gen_two_spirals(spec: &SpiralSpec) -> Result<DataMatrix> {
    spec.validate()?;
    let per = [spec.n_points / 2, spec.n_points - spec.n_points / 2];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| LsgcError::contract(e.to_string()))?;
    let mut values = Vec::with_capacity(2 * spec.n_points);
    let mut labels = Vec::with_capacity(spec.n_points);
    for (class, &count) in per.iter().enumerate() {
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for _ in 0..count {
            let s: f64 = rng.random();
            let [px, py] = spec.point_at(spec.theta_at(s));
            let (ex, ey) = if spec.noise > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            values.push(sign * px + ex);
            values.push(sign * py + ey);
            labels.push(class);
        }
    }
    DataMatrix::new(spec.n_points, 2, values)?.with_labels(labels)
}

/// Column layout of a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvSchema {
    /// Every column is a feature.
    #[default]
    Features,
    /// Last column is an integer class label.
    LabelLast,
    /// Last column is a real regression target.
    TargetLast,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> LsgcError {
    LsgcError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_finite(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("non-numeric cell '{}'", tok.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite value '{}'", tok.trim()),
        ));
    }
    Ok(v)
}

fn parse_label(path: &Path, line: usize, tok: &str) -> Result<usize> {
    let v = parse_finite(path, line, tok)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(parse_err(
            path,
            line,
            format!("label '{}' is not a nonnegative integer", tok.trim()),
        ));
    }
    Ok(v as usize)
}

/// Comma-separated numeric rows; blank lines are skipped.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<DataMatrix> {
    let file = fs::File::open(path).map_err(|e| LsgcError::io(path, e))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut targets = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| LsgcError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {w} cells, found {}", cells.len()),
                ));
            }
            _ => {}
        }
        let (feats, last) = match schema {
            CsvSchema::Features => (&cells[..], None),
            _ => {
                if cells.len() < 2 {
                    return Err(parse_err(
                        path,
                        lineno,
                        "need at least one feature and a final column",
                    ));
                }
                (&cells[..cells.len() - 1], Some(cells[cells.len() - 1]))
            }
        };
        for tok in feats {
            values.push(parse_finite(path, lineno, tok)?);
        }
        match (schema, last) {
            (CsvSchema::LabelLast, Some(tok)) => labels.push(parse_label(path, lineno, tok)?),
            (CsvSchema::TargetLast, Some(tok)) => targets.push(parse_finite(path, lineno, tok)?),
            _ => {}
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(LsgcError::EmptyDataset);
    }
    let cols = values.len() / rows;
    let data = DataMatrix::new(rows, cols, values)?;
    match schema {
        CsvSchema::Features => Ok(data),
        CsvSchema::LabelLast => data.with_labels(labels),
        CsvSchema::TargetLast => data.with_targets(targets),
    }
}

/// Write rows with labels (or targets) appended when present; floats round-trip exactly.
pub fn write_csv<W: Write>(mut out: W, data: &DataMatrix) -> std::io::Result<()> {
    for i in 0..data.n_samples() {
        let mut line = data
            .row(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",");
        if let Some(l) = data.labels() {
            line.push_str(&format!(",{}", l[i]));
        } else if let Some(t) = data.targets() {
            line.push_str(&format!(",{:?}", t[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| LsgcError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_csv(&mut w, data).map_err(|e| LsgcError::io(path, e))?;
    w.flush().map_err(|e| LsgcError::io(path, e))
}

/// Sparse `label idx:val ...` lines with 1-based indices. Labels may be any
/// integers; they are remapped to `0..#classes` in ascending order.
pub fn load_libsvm(path: &Path) -> Result<DataMatrix> {
    let (data, _) = load_libsvm_with_classes(path)?;
    Ok(data)
}

/// As [`load_libsvm`], also returning the original label of each class index.
pub fn load_libsvm_with_classes(path: &Path) -> Result<(DataMatrix, Vec<i64>)> {
    let file = fs::File::open(path).map_err(|e| LsgcError::io(path, e))?;
    let mut rows: Vec<(i64, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| LsgcError::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut toks = body.split_whitespace();
        let label_tok = toks.next().unwrap();
        let label_f = parse_finite(path, lineno, label_tok)?;
        if label_f.fract() != 0.0 {
            return Err(parse_err(
                path,
                lineno,
                format!("label '{label_tok}' is not an integer"),
            ));
        }
        let mut feats = Vec::new();
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno, format!("malformed token '{tok}'")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("malformed index in '{tok}'")))?;
            if i == 0 {
                return Err(parse_err(path, lineno, "indices are 1-based"));
            }
            let v = parse_finite(path, lineno, v)?;
            dim = dim.max(i);
            feats.push((i - 1, v));
        }
        feats.sort_by_key(|(i, _)| *i);
        if feats.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(parse_err(path, lineno, "duplicate feature index"));
        }
        rows.push((label_f as i64, feats));
    }
    if rows.is_empty() {
        return Err(LsgcError::EmptyDataset);
    }
    let mut classes: Vec<i64> = rows.iter().map(|(l, _)| *l).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut values = vec![0.0; rows.len() * dim];
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (l, feats)) in rows.iter().enumerate() {
        for &(i, v) in feats {
            values[r * dim + i] = v;
        }
        labels.push(classes.binary_search(l).unwrap());
    }
    let data = DataMatrix::new(rows.len(), dim, values)?.with_labels(labels)?;
    Ok((data, classes))
}

/// libsvm text with 1-based indices, skipping zeros; labels required.
pub fn write_libsvm<W: Write>(mut out: W, data: &DataMatrix) -> Result<()> {
    let labels = data
        .labels()
        .ok_or_else(|| LsgcError::contract("libsvm output needs labels"))?;
    let io = |e| LsgcError::io("<libsvm>", e);
    for i in 0..data.n_samples() {
        write!(out, "{}", labels[i]).map_err(io)?;
        for (j, v) in data.row(i).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v:?}", j + 1).map_err(io)?;
            }
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

/// Scale every row to unit Euclidean norm.
pub fn unit_normalize(data: &DataMatrix) -> Result<DataMatrix> {
    let d = data.dim();
    let mut values = Vec::with_capacity(data.values().len());
    for (i, row) in data.rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LsgcError::contract(format!("row {i} has zero norm")));
        }
        values.extend(row.iter().map(|v| v / norm));
    }
    let mut out = DataMatrix::new(data.n_samples(), d, values)?;
    if let Some(l) = data.labels() {
        out = out.with_labels(l.to_vec())?;
    }
    if let Some(t) = data.targets() {
        out = out.with_targets(t.to_vec())?;
    }
    Ok(out)
}

/// Stratified labeled/unlabeled split as row indices, each sorted ascending.
pub fn split_indices(
    labels: &[usize],
    n_per_class: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < n_per_class {
            return Err(LsgcError::InsufficientData(format!(
                "class {c} has {} samples, {n_per_class} requested",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_per_class]);
        test.extend_from_slice(&members[n_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified split of a labeled dataset into (train, test).
pub fn split(
    data: &DataMatrix,
    n_labeled_per_class: usize,
    seed: u64,
) -> Result<(DataMatrix, DataMatrix)> {
    let labels = data
        .labels()
        .ok_or_else(|| LsgcError::contract("split needs labels"))?;
    let (tr, te) = split_indices(labels, n_labeled_per_class, seed)?;
    Ok((data.select(&tr), data.select(&te)))
}

/// `n` distinct indices out of `0..total`, sorted.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(LsgcError::InsufficientData(format!(
            "{n} of {total} samples requested"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
