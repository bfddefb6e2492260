//! Benchmark protocols: spiral regression, few-label classification and
//! clustering in coding space.
//!
//! Each protocol returns one record per (setting, variant, seed) followed by a
//! mean record per (setting, variant). A run that fails keeps its slot and
//! carries the error message instead of metrics.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data::{
    gen_spiral, gen_two_spirals, load_csv, load_libsvm, sample_indices, split_indices,
    unit_normalize, CsvSchema, SpiralSpec, SpiralTarget,
};
use crate::dictionary::{learn_dictionary, learn_unit_dictionary, KMeansParams};
use crate::encoders::BaseEncoder;
use crate::error::{LsgcError, Result};
use crate::eval::{
    accuracy_ac, cross_validate, error_rate, fold_assignments, fold_splits, kmeans_cluster,
    linear_ova_train, nmi, pca_reduce, ridge_fit, ridge_predict, rmse, MetricReport, OvaModel,
    OvaParams,
};
use crate::lsgc::{LsgcModel, PowerLadder};
use crate::types::{DataMatrix, Dictionary, EncoderConfig, Method};

/// A base coder, optionally wrapped by LSGC. Written `sac`, `lsgc+sac`, ….
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub method: Method,
    pub lsgc: bool,
}

impl Variant {
    pub fn base(method: Method) -> Self {
        Variant {
            method,
            lsgc: false,
        }
    }

    pub fn lsgc(method: Method) -> Self {
        Variant { method, lsgc: true }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lsgc {
            write!(f, "lsgc+{}", self.method.name())
        } else {
            f.write_str(self.method.name())
        }
    }
}

impl FromStr for Variant {
    type Err = LsgcError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower
            .strip_prefix("lsgc+")
            .or_else(|| lower.strip_prefix("lsgc-"))
        {
            Some(rest) => Ok(Variant::lsgc(rest.parse()?)),
            None => Ok(Variant::base(lower.parse()?)),
        }
    }
}

impl TryFrom<String> for Variant {
    type Error = LsgcError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

/// Candidate settings searched by cross-validation. Bandwidths are factors of
/// the data scale σ̄ (root of the summed per-feature variances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub sigma: Vec<f64>,
    pub knn: Vec<usize>,
    pub lambda: Vec<f64>,
    pub lsgc_sigma: Vec<f64>,
    pub lsgc_knn: Vec<usize>,
    pub lsgc_lambda: Vec<f64>,
    pub t: Vec<usize>,
    /// Regularization of the downstream learner (ridge penalty or hinge λ).
    pub reg: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            sigma: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0],
            knn: vec![3, 5, 10, 20, 50, 100, 200, 400],
            lambda: vec![0.005, 0.01, 0.05, 0.1, 0.2, 0.4],
            lsgc_sigma: vec![0.1, 0.2, 0.3, 0.6],
            lsgc_knn: vec![3, 5, 7],
            lsgc_lambda: vec![0.1, 0.2, 0.4],
            t: vec![1, 2, 3, 5, 8, 11, 15],
            reg: vec![1e-3, 1e-2],
        }
    }
}

impl Grids {
    /// Encoder settings for `variant`; k-nn values the dictionary cannot support are dropped.
    pub fn encoder_configs(
        &self,
        variant: Variant,
        sigma_bar: f64,
        n_bases: usize,
        template: &EncoderConfig,
    ) -> Result<Vec<EncoderConfig>> {
        let (sigma, knn, lambda) = if variant.lsgc {
            (&self.lsgc_sigma, &self.lsgc_knn, &self.lsgc_lambda)
        } else {
            (&self.sigma, &self.knn, &self.lambda)
        };
        let max_knn = if variant.lsgc { n_bases - 1 } else { n_bases };
        let configs: Vec<EncoderConfig> = match variant.method {
            Method::Sac => sigma
                .iter()
                .map(|f| EncoderConfig {
                    method: Method::Sac,
                    sigma: f * sigma_bar,
                    ..template.clone()
                })
                .collect(),
            Method::Llc => knn
                .iter()
                .filter(|&&k| k >= 1 && k <= max_knn)
                .map(|&k| EncoderConfig {
                    method: Method::Llc,
                    knn: k,
                    ..template.clone()
                })
                .collect(),
            Method::Sparse => lambda
                .iter()
                .map(|&l| EncoderConfig {
                    method: Method::Sparse,
                    lambda: l,
                    ..template.clone()
                })
                .collect(),
        };
        if configs.is_empty() {
            return Err(LsgcError::contract(format!(
                "empty parameter grid for {variant}"
            )));
        }
        Ok(configs)
    }

    pub fn steps(&self, variant: Variant) -> Vec<usize> {
        if variant.lsgc {
            self.t.clone()
        } else {
            vec![1]
        }
    }
}

/// Where benchmark samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Comma-separated features with an integer class label in the last column.
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Two interleaved spirals labeled 0/1; regenerated per seed.
    TwoSpirals(SpiralSpec),
}

impl DatasetSource {
    pub fn name(&self) -> String {
        let stem = |p: &Path| {
            p.file_stem()
                .map_or("data".into(), |s| s.to_string_lossy().into_owned())
        };
        match self {
            DatasetSource::Csv { path, name } | DatasetSource::Libsvm { path, name } => {
                name.clone().unwrap_or_else(|| stem(path))
            }
            DatasetSource::TwoSpirals(_) => "two_spirals".into(),
        }
    }

    fn per_seed(&self) -> bool {
        matches!(self, DatasetSource::TwoSpirals(_))
    }

    /// Samples with class labels; generated sources use `seed`.
    pub fn load(&self, seed: u64) -> Result<DataMatrix> {
        let data = match self {
            DatasetSource::Csv { path, .. } => load_csv(path, CsvSchema::LabelLast)?,
            DatasetSource::Libsvm { path, .. } => load_libsvm(path)?,
            DatasetSource::TwoSpirals(spec) => gen_two_spirals(&SpiralSpec {
                seed,
                ..spec.clone()
            })?,
        };
        if data.labels().is_none() {
            return Err(LsgcError::contract(format!(
                "dataset {} has no labels",
                self.name()
            )));
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regress,
    Classify,
    Cluster,
}

impl FromStr for Task {
    type Err = LsgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regress" | "regression" => Ok(Task::Regress),
            "classify" | "classification" => Ok(Task::Classify),
            "cluster" | "clustering" => Ok(Task::Cluster),
            other => Err(LsgcError::contract(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Run,
    Mean,
}

/// One line of a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: RecordKind,
    pub run_id: String,
    pub task: Task,
    pub dataset: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Labeled samples per class (classify) or in total (regress).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_labeled: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    pub metrics: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Successful runs averaged into a mean record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<usize>,
}

impl RunRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// Header line tying a run id to the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub kind: String,
    pub run_id: String,
    pub task: Task,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub header: ConfigRecord,
    pub records: Vec<RunRecord>,
}

impl BenchmarkOutput {
    fn new<C: Serialize>(task: Task, config: &C, records: Vec<RunRecord>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let run_id = run_id(&config)?;
        let records = records
            .into_iter()
            .map(|r| RunRecord {
                run_id: run_id.clone(),
                ..r
            })
            .collect();
        Ok(BenchmarkOutput {
            header: ConfigRecord {
                kind: "config".into(),
                run_id,
                task,
                config,
            },
            records,
        })
    }

    pub fn means(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Mean)
    }

    /// Mean record of `method` (and `n_labeled` when given).
    pub fn mean_of(&self, method: &str, n_labeled: Option<usize>) -> Option<&RunRecord> {
        self.means()
            .find(|r| r.method == method && (n_labeled.is_none() || r.n_labeled == n_labeled))
    }

    pub fn runs_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.kind == RecordKind::Run && r.method == method)
    }

    /// JSON lines: the config header, then every record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| LsgcError::io(Path::new("<result stream>"), e);
        writeln!(out, "{}", serde_json::to_string(&self.header)?).map_err(io)?;
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r)?).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| LsgcError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| LsgcError::io(path, e))
    }
}

fn run_id(config: &Value) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_string(config)?.as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Run records of a result file; config headers are skipped.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let f = std::fs::File::open(path).map_err(|e| LsgcError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| LsgcError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| LsgcError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if v.get("kind").and_then(Value::as_str) == Some("config") {
            continue;
        }
        out.push(serde_json::from_value(v).map_err(|e| LsgcError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub const REPORT_CSV_HEADER: &str =
    "run_id,task,dataset,method,n_labeled,n_classes,runs,failed,nmi,ac,rmse,error_rate";

/// Mean records as plot-ready CSV.
pub fn report_csv(records: &[RunRecord]) -> String {
    let opt_u = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
    let opt_f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for r in records.iter().filter(|r| r.kind == RecordKind::Mean) {
        let task = serde_json::to_value(r.task)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id,
            task,
            r.dataset,
            r.method,
            opt_u(r.n_labeled),
            opt_u(r.n_classes),
            opt_u(r.runs),
            opt_u(r.failed),
            opt_f(r.metrics.nmi),
            opt_f(r.metrics.ac),
            opt_f(r.metrics.rmse),
            opt_f(r.metrics.error_rate),
        ));
    }
    s
}

/// A trained coder that can emit codes at any step count up to its ladder size.
enum Coder {
    Base(BaseEncoder),
    Lsgc {
        model: LsgcModel,
        ladder: PowerLadder,
    },
}

impl Coder {
    fn new(dict: &Dictionary, config: &EncoderConfig, lsgc: bool, max_t: usize) -> Result<Self> {
        if lsgc {
            let model = LsgcModel::build(
                dict.clone(),
                EncoderConfig {
                    t: 1,
                    ..config.clone()
                },
            )?;
            let ladder = PowerLadder::new(model.transition().p_tilde(), max_t);
            Ok(Coder::Lsgc { model, ladder })
        } else {
            Ok(Coder::Base(BaseEncoder::new(dict.clone(), config.clone())?))
        }
    }

    /// Sample-per-row codes of `data`, one matrix per entry of `steps`.
    fn codes(&self, data: &DataMatrix, steps: &[usize]) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Coder::Base(enc) => {
                let rows = enc.encode_all(data)?;
                let k = enc.dictionary().k();
                let m = DMatrix::from_fn(rows.len(), k, |i, j| rows[i].coeffs()[j]);
                Ok(steps.iter().map(|_| m.clone()).collect())
            }
            Coder::Lsgc { model, ladder } => {
                let l = model.datum_matrix(data)?;
                steps
                    .iter()
                    .map(|&t| {
                        let c = if t == 1 {
                            l.clone()
                        } else if l.ncols() > l.nrows() {
                            ladder.power(t)? * &l
                        } else {
                            ladder.apply(t, &l)?
                        };
                        Ok(model.merge_matrix(c).transpose())
                    })
                    .collect()
            }
        }
    }
}

/// Factor bringing the mean squared row norm of `codes` to one.
fn code_scale(codes: &DMatrix<f64>) -> f64 {
    let ms = codes.norm_squared() / codes.nrows().max(1) as f64;
    if ms > 0.0 {
        1.0 / ms.sqrt()
    } else {
        1.0
    }
}

fn to_data(codes: &DMatrix<f64>) -> Result<DataMatrix> {
    DataMatrix::new(
        codes.nrows(),
        codes.ncols(),
        codes.transpose().as_slice().to_vec(),
    )
}

#[derive(Debug, Clone)]
enum Targets {
    Real(Vec<f64>),
    Class(Vec<usize>),
}

impl Targets {
    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Real(y) => Targets::Real(idx.iter().map(|&i| y[i]).collect()),
            Targets::Class(y) => Targets::Class(idx.iter().map(|&i| y[i]).collect()),
        }
    }

    fn len(&self) -> usize {
        match self {
            Targets::Real(y) => y.len(),
            Targets::Class(y) => y.len(),
        }
    }
}

enum Fitted {
    Ridge(DVector<f64>),
    Ova(OvaModel),
}

fn fit(codes: &DMatrix<f64>, y: &Targets, reg: f64, ova: &OvaParams) -> Result<Fitted> {
    match y {
        Targets::Real(v) => Ok(Fitted::Ridge(ridge_fit(codes, v, reg)?)),
        Targets::Class(l) => Ok(Fitted::Ova(linear_ova_train(
            codes,
            l,
            &OvaParams {
                lambda: reg,
                ..*ova
            },
        )?)),
    }
}

/// RMSE for regression, error rate for classification.
fn loss(model: &Fitted, codes: &DMatrix<f64>, y: &Targets) -> Result<f64> {
    match (model, y) {
        (Fitted::Ridge(w), Targets::Real(v)) => rmse(&ridge_predict(w, codes)?, v),
        (Fitted::Ova(m), Targets::Class(l)) => error_rate(&m.predict(codes)?, l),
        _ => Err(LsgcError::contract("learner does not match the targets")),
    }
}

fn params_of(
    variant: Variant,
    config: &EncoderConfig,
    sigma_bar: f64,
    t: usize,
) -> Map<String, Value> {
    let mut m = Map::new();
    match variant.method {
        Method::Sac => {
            m.insert("sigma".into(), config.sigma.into());
            m.insert("sigma_factor".into(), (config.sigma / sigma_bar).into());
        }
        Method::Llc => {
            m.insert("knn".into(), config.knn.into());
        }
        Method::Sparse => {
            m.insert("lambda".into(), config.lambda.into());
        }
    }
    if variant.lsgc {
        m.insert("t".into(), t.into());
    }
    m
}

struct Supervised<'a> {
    data: &'a DataMatrix,
    dict: &'a Dictionary,
    sigma_bar: f64,
    targets: Targets,
    train: &'a [usize],
    test: &'a [usize],
    folds: usize,
    seed: u64,
    ova: OvaParams,
}

impl Supervised<'_> {
    /// Cross-validate the grid on the labeled rows, refit the winner and score the test rows.
    fn run(
        &self,
        variant: Variant,
        grids: &Grids,
        template: &EncoderConfig,
    ) -> Result<(Map<String, Value>, MetricReport)> {
        let n_bases = self.dict.k();
        let configs = grids.encoder_configs(variant, self.sigma_bar, n_bases, template)?;
        let steps = grids.steps(variant);
        if grids.reg.is_empty() || steps.is_empty() {
            return Err(LsgcError::contract("empty regularization or step grid"));
        }
        let max_t = *steps.iter().max().unwrap();
        let train_data = self.data.select(self.train);
        let y_train = self.targets.select(self.train);

        let bank: Vec<(Coder, Vec<(DMatrix<f64>, f64)>)> = configs
            .par_iter()
            .map(|c| {
                let coder = Coder::new(self.dict, c, variant.lsgc, max_t)?;
                let mats = coder
                    .codes(&train_data, &steps)?
                    .into_iter()
                    .map(|m| {
                        let s = code_scale(&m);
                        (m * s, s)
                    })
                    .collect();
                Ok((coder, mats))
            })
            .collect::<Result<_>>()?;

        let mut grid = Vec::new();
        for ci in 0..configs.len() {
            for ti in 0..steps.len() {
                for ri in 0..grids.reg.len() {
                    grid.push((ci, ti, ri));
                }
            }
        }
        let strat = match &y_train {
            Targets::Class(l) => Some(l.as_slice()),
            Targets::Real(_) => None,
        };
        let assign = fold_assignments(strat, y_train.len(), self.folds, self.seed)?;
        let splits = fold_splits(&assign, self.folds);
        let cv = cross_validate(
            &grid,
            &splits,
            |g| steps[g.1],
            |g, tr, va| {
                let c = &bank[g.0].1[g.1].0;
                let model = fit(
                    &c.select_rows(tr),
                    &y_train.select(tr),
                    grids.reg[g.2],
                    &self.ova,
                )?;
                loss(&model, &c.select_rows(va), &y_train.select(va))
            },
        )?;
        let (ci, ti, ri) = grid[cv.best];
        let (coder, mats) = &bank[ci];
        let (codes, scale) = &mats[ti];
        let model = fit(codes, &y_train, grids.reg[ri], &self.ova)?;
        let test_codes = coder
            .codes(&self.data.select(self.test), &[steps[ti]])?
            .remove(0)
            * *scale;
        let test_loss = loss(&model, &test_codes, &self.targets.select(self.test))?;

        let mut params = params_of(variant, &configs[ci], self.sigma_bar, steps[ti]);
        params.insert("reg".into(), grids.reg[ri].into());
        let mut metrics = MetricReport {
            folds: cv.fold_scores[cv.best].clone(),
            ..Default::default()
        };
        match self.targets {
            Targets::Real(_) => metrics.rmse = Some(test_loss),
            Targets::Class(_) => metrics.error_rate = Some(test_loss),
        }
        Ok((params, metrics))
    }
}

fn dictionary_params(n_bases: usize, iters: usize, seed: u64) -> KMeansParams {
    KMeansParams {
        max_iters: iters,
        ..KMeansParams::new(n_bases, seed)
    }
}

/// Dictionaries shared by all variants of one seed: plain k-means bases, and
/// unit-norm bases learned on unit-normalized rows for sparse coding.
struct Dictionaries {
    plain: Option<Dictionary>,
    unit: Option<Dictionary>,
}

impl Dictionaries {
    fn learn(
        data: &DataMatrix,
        variants: &[Variant],
        n_bases: usize,
        iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let params = dictionary_params(n_bases, iters, seed);
        let plain = if variants.iter().any(|v| v.method != Method::Sparse) {
            Some(learn_dictionary(data, &params)?)
        } else {
            None
        };
        let unit = if variants.iter().any(|v| v.method == Method::Sparse) {
            Some(learn_unit_dictionary(&unit_normalize(data)?, &params)?)
        } else {
            None
        };
        Ok(Dictionaries { plain, unit })
    }

    fn for_variant(&self, v: Variant) -> &Dictionary {
        let d = if v.method == Method::Sparse {
            &self.unit
        } else {
            &self.plain
        };
        d.as_ref()
            .expect("dictionary learned for every requested variant")
    }
}

fn run_record(
    task: Task,
    dataset: &str,
    variant: Variant,
    seed: u64,
    outcome: Result<(Map<String, Value>, MetricReport)>,
) -> RunRecord {
    let (params, metrics, error) = match outcome {
        Ok((p, m)) => (p, m, None),
        Err(e) => {
            warn!("{dataset}/{variant} seed {seed} failed: {e}");
            (Map::new(), MetricReport::default(), Some(e.to_string()))
        }
    };
    RunRecord {
        kind: RecordKind::Run,
        run_id: String::new(),
        task,
        dataset: dataset.into(),
        method: variant.to_string(),
        seed: Some(seed),
        n_labeled: None,
        n_classes: None,
        params,
        metrics,
        error,
        runs: None,
        failed: None,
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Average of the successful runs in `runs`, which share task, dataset, method and setting.
fn mean_record(runs: &[RunRecord]) -> RunRecord {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| !r.is_error()).collect();
    let first = &runs[0];
    RunRecord {
        kind: RecordKind::Mean,
        seed: None,
        params: Map::new(),
        metrics: MetricReport {
            nmi: mean_of(ok.iter().map(|r| r.metrics.nmi)),
            ac: mean_of(ok.iter().map(|r| r.metrics.ac)),
            rmse: mean_of(ok.iter().map(|r| r.metrics.rmse)),
            error_rate: mean_of(ok.iter().map(|r| r.metrics.error_rate)),
            folds: Vec::new(),
        },
        error: None,
        runs: Some(ok.len()),
        failed: Some(runs.len() - ok.len()),
        ..first.clone()
    }
}

/// Group `per_seed[s][v]` into variant-major order with a trailing mean per variant.
fn assemble(per_seed: Vec<Vec<RunRecord>>, n_variants: usize) -> Vec<RunRecord> {
    let mut out = Vec::new();
    for v in 0..n_variants {
        let runs: Vec<RunRecord> = per_seed.iter().map(|s| s[v].clone()).collect();
        if runs.is_empty() {
            continue;
        }
        let mean = mean_record(&runs);
        out.extend(runs);
        out.push(mean);
    }
    out
}

/// Spiral regression: ridge regression on codes of a few labeled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressConfig {
    /// Geometry of the spiral; its seed is replaced by each run seed.
    pub spiral: SpiralSpec,
    pub n_bases: usize,
    pub n_labeled: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub folds: usize,
    pub grids: Grids,
    pub encoder: EncoderConfig,
    pub kmeans_iters: usize,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            spiral: SpiralSpec::default(),
            n_bases: 512,
            n_labeled: 100,
            seeds: (0..20).collect(),
            variants: vec![
                Variant::base(Method::Sac),
                Variant::base(Method::Llc),
                Variant::lsgc(Method::Sac),
                Variant::lsgc(Method::Llc),
            ],
            folds: 5,
            grids: Grids {
                sigma: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
                knn: vec![2, 3, 5, 10, 20, 30, 50, 100],
                lambda: vec![0.01, 0.05, 0.1, 0.2],
                lsgc_sigma: vec![0.005, 0.01, 0.02],
                lsgc_knn: vec![2, 3, 5, 7],
                lsgc_lambda: vec![0.1, 0.2, 0.4],
                t: vec![1, 2, 5, 10, 20, 50, 100, 200],
                reg: vec![1e-6, 1e-4, 1e-2, 1.0],
            },
            encoder: EncoderConfig::default(),
            kmeans_iters: 100,
        }
    }
}

pub fn run_regression(config: &RegressConfig) -> Result<BenchmarkOutput> {
    if config.variants.is_empty() || config.seeds.is_empty() {
        return Err(LsgcError::contract(
            "benchmark needs at least one variant and one seed",
        ));
    }
    let dataset = "spiral";
    let per_seed: Vec<Vec<RunRecord>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            info!("regress seed {seed}");
            let prepared = (|| -> Result<_> {
                let data = gen_spiral(&SpiralSpec {
                    seed,
                    ..config.spiral.clone()
                })?;
                let dicts = Dictionaries::learn(
                    &data,
                    &config.variants,
                    config.n_bases,
                    config.kmeans_iters,
                    seed,
                )?;
                let train = sample_indices(data.n_samples(), config.n_labeled, seed)?;
                let test: Vec<usize> = {
                    let mut mark = vec![false; data.n_samples()];
                    train.iter().for_each(|&i| mark[i] = true);
                    (0..data.n_samples()).filter(|&i| !mark[i]).collect()
                };
                Ok((data, dicts, train, test))
            })();
            config
                .variants
                .iter()
                .map(|&v| {
                    let outcome = match &prepared {
                        Ok((data, dicts, train, test)) => Supervised {
                            data,
                            dict: dicts.for_variant(v),
                            sigma_bar: data.total_std(),
                            targets: Targets::Real(
                                data.targets().expect("spiral targets").to_vec(),
                            ),
                            train,
                            test,
                            folds: config.folds,
                            seed,
                            ova: OvaParams::default(),
                        }
                        .run(v, &config.grids, &config.encoder),
                        Err(e) => Err(LsgcError::contract(e.to_string())),
                    };
                    let mut r = run_record(Task::Regress, dataset, v, seed, outcome);
                    r.n_labeled = Some(config.n_labeled);
                    r
                })
                .collect()
        })
        .collect();
    BenchmarkOutput::new(
        Task::Regress,
        config,
        assemble(per_seed, config.variants.len()),
    )
}

/// Few-label classification with one-vs-all linear classifiers in coding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub dataset: DatasetSource,
    pub n_bases: usize,
    pub n_per_class: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub folds: usize,
    pub grids: Grids,
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub kmeans_iters: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            dataset: DatasetSource::Csv {
                path: PathBuf::from("data/optdigits_1797.csv"),
                name: Some("digit".into()),
            },
            n_bases: 512,
            n_per_class: vec![10],
            seeds: (0..20).collect(),
            variants: vec![
                Variant::base(Method::Sac),
                Variant::base(Method::Llc),
                Variant::base(Method::Sparse),
                Variant::lsgc(Method::Sac),
                Variant::lsgc(Method::Llc),
                Variant::lsgc(Method::Sparse),
            ],
            folds: 5,
            grids: Grids::default(),
            encoder: EncoderConfig::default(),
            epochs: 300,
            kmeans_iters: 100,
        }
    }
}

pub fn run_classification(config: &ClassifyConfig) -> Result<BenchmarkOutput> {
    if config.variants.is_empty() || config.seeds.is_empty() || config.n_per_class.is_empty() {
        return Err(LsgcError::contract(
            "benchmark needs variants, seeds and labeled counts",
        ));
    }
    let dataset = config.dataset.name();
    let shared = if config.dataset.per_seed() {
        None
    } else {
        Some(config.dataset.load(0)?)
    };
    let per_seed: Vec<Vec<Vec<RunRecord>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            info!("classify seed {seed}");
            let prepared = (|| -> Result<_> {
                let data = match &shared {
                    Some(d) => d.clone(),
                    None => config.dataset.load(seed)?,
                };
                let dicts = Dictionaries::learn(
                    &data,
                    &config.variants,
                    config.n_bases,
                    config.kmeans_iters,
                    seed,
                )?;
                Ok((data, dicts))
            })();
            config
                .n_per_class
                .iter()
                .map(|&n_per| {
                    config
                        .variants
                        .iter()
                        .map(|&v| {
                            let outcome = prepared
                                .as_ref()
                                .map_err(|e| LsgcError::contract(e.to_string()))
                                .and_then(|(data, dicts)| {
                                    let labels = data.labels().unwrap();
                                    let (train, test) = split_indices(labels, n_per, seed)?;
                                    if test.is_empty() {
                                        return Err(LsgcError::InsufficientData(
                                            "no test samples left".into(),
                                        ));
                                    }
                                    Supervised {
                                        data,
                                        dict: dicts.for_variant(v),
                                        sigma_bar: data.total_std(),
                                        targets: Targets::Class(labels.to_vec()),
                                        train: &train,
                                        test: &test,
                                        folds: config.folds,
                                        seed,
                                        ova: OvaParams {
                                            epochs: config.epochs,
                                            seed,
                                            ..OvaParams::default()
                                        },
                                    }
                                    .run(
                                        v,
                                        &config.grids,
                                        &config.encoder,
                                    )
                                });
                            let mut r = run_record(Task::Classify, &dataset, v, seed, outcome);
                            r.n_labeled = Some(n_per);
                            r
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for (li, _) in config.n_per_class.iter().enumerate() {
        let block: Vec<Vec<RunRecord>> = per_seed.iter().map(|s| s[li].clone()).collect();
        records.extend(assemble(block, config.variants.len()));
    }
    BenchmarkOutput::new(Task::Classify, config, records)
}

/// Fixed encoder settings for clustering; bandwidths are factors of σ̄.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub sigma: f64,
    pub knn: usize,
    pub lambda: f64,
    pub lsgc_sigma: f64,
    pub lsgc_knn: usize,
    pub lsgc_lambda: f64,
    pub t: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            sigma: 0.05,
            knn: 20,
            lambda: 0.1,
            lsgc_sigma: 0.05,
            lsgc_knn: 3,
            lsgc_lambda: 0.3,
            t: 50,
        }
    }
}

impl ClusterParams {
    fn as_grids(&self) -> Grids {
        Grids {
            sigma: vec![self.sigma],
            knn: vec![self.knn],
            lambda: vec![self.lambda],
            lsgc_sigma: vec![self.lsgc_sigma],
            lsgc_knn: vec![self.lsgc_knn],
            lsgc_lambda: vec![self.lsgc_lambda],
            t: vec![self.t],
            reg: Vec::new(),
        }
    }
}

/// k-means in coding space after PCA, scored by NMI and AC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub dataset: DatasetSource,
    /// Draw this many classes at random per run; all classes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    pub n_bases: usize,
    pub seeds: Vec<u64>,
    pub restarts: usize,
    /// Variance share kept by PCA before coding; 1 skips the projection.
    pub energy: f64,
    pub variants: Vec<Variant>,
    pub params: ClusterParams,
    /// When set, every grid setting is tried and the best NMI per run is kept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Grids>,
    pub encoder: EncoderConfig,
    pub kmeans_iters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            dataset: DatasetSource::TwoSpirals(two_spiral_geometry()),
            n_classes: None,
            n_bases: 64,
            seeds: (0..20).collect(),
            restarts: 20,
            energy: 0.98,
            variants: vec![Variant::base(Method::Llc), Variant::lsgc(Method::Llc)],
            params: ClusterParams::default(),
            sweep: None,
            encoder: EncoderConfig::default(),
            kmeans_iters: 100,
        }
    }
}

/// One-turn interleaved spirals whose arms stay several basis spacings apart at K = 64.
pub fn two_spiral_geometry() -> SpiralSpec {
    SpiralSpec {
        n_points: 1000,
        turns: 1.0,
        inner_radius: 3.0,
        arm_gap: 8.0,
        noise: 0.1,
        target: SpiralTarget::ArcLength,
        seed: 0,
    }
}

fn pick_classes(data: &DataMatrix, n_classes: Option<usize>, seed: u64) -> Result<DataMatrix> {
    let labels = data.labels().unwrap();
    let total = data.n_classes();
    let Some(c) = n_classes.filter(|&c| c < total) else {
        return Ok(data.clone());
    };
    let chosen = sample_indices(total, c, seed)?;
    let mut remap = vec![usize::MAX; total];
    chosen
        .iter()
        .enumerate()
        .for_each(|(new, &old)| remap[old] = new);
    let rows: Vec<usize> = (0..data.n_samples())
        .filter(|&i| remap[labels[i]] != usize::MAX)
        .collect();
    let sub = data.select(&rows);
    let relabeled = rows.iter().map(|&i| remap[labels[i]]).collect();
    let values = sub.values().to_vec();
    DataMatrix::new(sub.n_samples(), sub.dim(), values)?.with_labels(relabeled)
}

fn cluster_variant(
    data: &DataMatrix,
    dict: &Dictionary,
    variant: Variant,
    grids: &Grids,
    config: &ClusterConfig,
    seed: u64,
) -> Result<(Map<String, Value>, MetricReport)> {
    let labels = data.labels().unwrap();
    let k = data.n_classes();
    let sigma_bar = data.total_std();
    let configs = grids.encoder_configs(variant, sigma_bar, dict.k(), &config.encoder)?;
    let steps = grids.steps(variant);
    let max_t = steps.iter().copied().max().unwrap_or(1);
    let mut best: Option<(f64, Map<String, Value>, MetricReport)> = None;
    for c in &configs {
        let coder = Coder::new(dict, c, variant.lsgc, max_t)?;
        for (t, codes) in steps.iter().zip(coder.codes(data, &steps)?) {
            let res = kmeans_cluster(&to_data(&codes)?, k, config.restarts, seed)?;
            let score = nmi(labels, &res.assignments)?;
            if best.as_ref().is_none_or(|b| score > b.0) {
                let metrics = MetricReport {
                    nmi: Some(score),
                    ac: Some(accuracy_ac(labels, &res.assignments)?),
                    ..Default::default()
                };
                best = Some((score, params_of(variant, c, sigma_bar, *t), metrics));
            }
        }
    }
    let (_, params, metrics) = best.ok_or_else(|| LsgcError::contract("empty clustering grid"))?;
    Ok((params, metrics))
}

pub fn run_clustering(config: &ClusterConfig) -> Result<BenchmarkOutput> {
    if config.variants.is_empty() || config.seeds.is_empty() {
        return Err(LsgcError::contract(
            "benchmark needs at least one variant and one seed",
        ));
    }
    let dataset = config.dataset.name();
    let grids = config
        .sweep
        .clone()
        .unwrap_or_else(|| config.params.as_grids());
    let shared = if config.dataset.per_seed() {
        None
    } else {
        Some(config.dataset.load(0)?)
    };
    let per_seed: Vec<Vec<RunRecord>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            info!("cluster seed {seed}");
            let prepared = (|| -> Result<_> {
                let raw = match &shared {
                    Some(d) => d.clone(),
                    None => config.dataset.load(seed)?,
                };
                let picked = pick_classes(&raw, config.n_classes, seed)?;
                let data = if config.energy < 1.0 {
                    pca_reduce(&picked, config.energy)?.reduced
                } else {
                    picked
                };
                let dicts = Dictionaries::learn(
                    &data,
                    &config.variants,
                    config.n_bases,
                    config.kmeans_iters,
                    seed,
                )?;
                Ok((data, dicts))
            })();
            config
                .variants
                .iter()
                .map(|&v| {
                    let outcome = prepared
                        .as_ref()
                        .map_err(|e| LsgcError::contract(e.to_string()))
                        .and_then(|(data, dicts)| {
                            cluster_variant(data, dicts.for_variant(v), v, &grids, config, seed)
                        });
                    let mut r = run_record(Task::Cluster, &dataset, v, seed, outcome);
                    r.n_classes = prepared.as_ref().ok().map(|(d, _)| d.n_classes());
                    r
                })
                .collect()
        })
        .collect();
    BenchmarkOutput::new(
        Task::Cluster,
        config,
        assemble(per_seed, config.variants.len()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for s in [
            "sac",
            "llc",
            "sparse",
            "lsgc+sac",
            "lsgc+llc",
            "lsgc+sparse",
        ] {
            assert_eq!(s.parse::<Variant>().unwrap().to_string(), s);
        }
        assert_eq!(
            "LSGC-SC".parse::<Variant>().unwrap(),
            Variant::lsgc(Method::Sparse)
        );
        assert!("lsgc+vq".parse::<Variant>().is_err());
    }

    #[test]
    fn knn_grid_respects_dictionary_size() {
        let g = Grids::default();
        let c = g
            .encoder_configs(
                Variant::base(Method::Llc),
                1.0,
                64,
                &EncoderConfig::default(),
            )
            .unwrap();
        assert!(c.iter().all(|c| c.knn <= 64));
        assert_eq!(c.len(), 5);
        assert_eq!(g.steps(Variant::base(Method::Llc)), vec![1]);
    }

    #[test]
    fn mean_skips_failed_runs() {
        let ok = |v: f64, seed: u64| RunRecord {
            kind: RecordKind::Run,
            run_id: String::new(),
            task: Task::Regress,
            dataset: "d".into(),
            method: "sac".into(),
            seed: Some(seed),
            n_labeled: Some(5),
            n_classes: None,
            params: Map::new(),
            metrics: MetricReport {
                rmse: Some(v),
                ..Default::default()
            },
            error: None,
            runs: None,
            failed: None,
        };
        let mut bad = ok(0.0, 2);
        bad.metrics = MetricReport::default();
        bad.error = Some("boom".into());
        let m = mean_record(&[ok(1.0, 0), ok(3.0, 1), bad]);
        assert_eq!(m.metrics.rmse, Some(2.0));
        assert_eq!((m.runs, m.failed), (Some(2), Some(1)));
        assert_eq!(m.seed, None);
    }

    #[test]
    fn config_round_trips_through_toml_shaped_json() {
        let c = ClusterConfig::default();
        let v = serde_json::to_value(&c).unwrap();
        let back: ClusterConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
        let partial: RegressConfig =
            serde_json::from_str(r#"{"n_bases": 32, "variants": ["lsgc+llc"]}"#).unwrap();
        assert_eq!(partial.n_bases, 32);
        assert_eq!(partial.variants, vec![Variant::lsgc(Method::Llc)]);
        assert_eq!(partial.n_labeled, 100);
    }
}
