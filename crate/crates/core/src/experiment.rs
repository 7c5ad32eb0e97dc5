//! Experiment configuration, single runs, attack grids and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Architecture, Model, ModelVersion};
use crate::poisoning::{auto_select_source_target, AttackConfig, AttackKind, AttackName, DistanceScope};
use crate::protocol::{derive_seed, run_training, AggregationSchedule, TrainOptions, TrainingSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    Ecg,
    Synth,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "ecg" => Ok(DatasetKind::Ecg),
            "synth" => Ok(DatasetKind::Synth),
            _ => Err(Error::Config(format!("unknown dataset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full-size setup: 10 x (5000 + 1000) MNIST clients for 40 epochs, 5 ECG clients for 50.
    Full,
    /// Small runs: 6,000 MNIST training samples, 1,000 test samples, 10 epochs;
    /// synthetic stand-ins when dataset files are absent.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

/// Class separation of the synthetic MNIST stand-in.
pub const MNIST_STANDIN_SEPARATION: f64 = 10.0;
/// Class separation of the synthetic ECG stand-in.
pub const ECG_STANDIN_SEPARATION: f64 = 6.0;

/// Fully resolved experiment configuration. Everything that affects the
/// outcome is in here, so a report that embeds it can be re-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub model_version: ModelVersion,
    pub preset: Preset,
    pub num_clients: usize,
    pub malicious_pct: u32,
    pub attack: AttackName,
    pub source_class: Option<usize>,
    pub target_class: Option<usize>,
    pub flood_label: Option<usize>,
    pub distance_scope: DistanceScope,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub aggregation: AggregationSchedule,
    pub train_per_client: usize,
    pub holdout_per_client: usize,
    /// Test-set size for generated or subsampled data; `None` uses all available.
    pub test_size: Option<usize>,
    pub synth_separation: f64,
    pub standardize: bool,
    pub mnist_dir: Option<PathBuf>,
    pub ecg_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for `dataset` and `version` under `preset`.
    pub fn preset(dataset: DatasetKind, version: ModelVersion, preset: Preset) -> Self {
        let arch = version.architecture();
        let (num_clients, epochs, train, holdout, test_size) = match (arch, preset) {
            (Architecture::Mnist, Preset::Full) => (10, 40, 5000, 1000, None),
            (Architecture::Mnist, Preset::Desk) => (10, 10, 600, 0, Some(1000)),
            // ECG shards are derived from the training half at run time.
            (Architecture::Ecg, Preset::Full) => (5, 50, 0, 0, None),
            (Architecture::Ecg, Preset::Desk) => (5, 20, 400, 0, Some(2000)),
        };
        let (lr, batch_size) = match preset {
            Preset::Full => (crate::nn::DEFAULT_LR, 32),
            Preset::Desk => (DESK_LR, DESK_BATCH),
        };
        let synth_separation = match (dataset, arch) {
            (DatasetKind::Synth, _) => data::DEFAULT_SEPARATION,
            (_, Architecture::Mnist) => MNIST_STANDIN_SEPARATION,
            (_, Architecture::Ecg) => ECG_STANDIN_SEPARATION,
        };
        Self {
            dataset,
            model_version: version,
            preset,
            num_clients,
            malicious_pct: 0,
            attack: AttackName::None,
            source_class: None,
            target_class: None,
            flood_label: None,
            distance_scope: DistanceScope::Batch,
            epochs,
            lr,
            batch_size,
            seed: 0,
            aggregation: AggregationSchedule::PerEpoch,
            train_per_client: train,
            holdout_per_client: holdout,
            test_size,
            synth_separation,
            standardize: false,
            mnist_dir: None,
            ecg_csv: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.model_version.architecture();
        match (self.dataset, arch) {
            (DatasetKind::Mnist, Architecture::Ecg) | (DatasetKind::Ecg, Architecture::Mnist) => {
                return Err(Error::Config(format!(
                    "dataset {:?} cannot train model {}",
                    self.dataset, self.model_version
                )))
            }
            _ => {}
        }
        if self.num_clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.malicious_pct > 100 {
            return Err(Error::Config(format!("malicious percentage {} exceeds 100", self.malicious_pct)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        let classes = self.num_classes();
        for (name, v) in [
            ("source class", self.source_class),
            ("target class", self.target_class),
            ("flood label", self.flood_label),
        ] {
            if let Some(v) = v.filter(|&v| v >= classes) {
                return Err(Error::Config(format!("{name} {v} outside 0..{classes}")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.model_version.default_spec().num_classes
    }

    /// `round(K * pct / 100)`.
    pub fn malicious_count(&self) -> usize {
        (self.num_clients as f64 * f64::from(self.malicious_pct) / 100.0).round() as usize
    }

    /// Lowest client ids are malicious.
    pub fn malicious_flags(&self) -> Vec<bool> {
        let m = self.malicious_count();
        (0..self.num_clients).map(|k| k < m).collect()
    }

    pub fn is_attacked(&self) -> bool {
        self.malicious_count() > 0 && self.attack != AttackName::None
    }

    /// Clean counterpart: same data, seeds and schedule, no malicious clients.
    pub fn baseline(&self) -> Self {
        Self {
            malicious_pct: 0,
            attack: AttackName::None,
            source_class: None,
            target_class: None,
            flood_label: None,
            ..self.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lr: self.lr,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, &[SEED_ORDER]),
            shuffle: true,
            aggregation: self.aggregation,
        }
    }
}

/// Desk-preset learning rate and batch size.
pub const DESK_LR: f64 = 0.05;
pub const DESK_BATCH: usize = 16;

const SEED_DATA: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_ORDER: u64 = 3;
const SEED_ATTACK: u64 = 4;

/// Where a run's data came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum DataSource {
    Files(String),
    Synthetic(String),
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub shards: Vec<Dataset>,
    pub test: Dataset,
    pub source: DataSource,
}

fn mnist_files_present(dir: &Path) -> bool {
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| dir.join(f).is_file())
}

fn standin(config: &ExperimentConfig, name: &str, per_class: usize) -> Result<Dataset> {
    let spec = config.model_version.default_spec();
    let synth = SynthSpec {
        name: name.into(),
        num_classes: spec.num_classes,
        features: spec.input_size(),
        n_per_class: per_class,
        separation: config.synth_separation,
    };
    data::synth_dataset_with(&synth, derive_seed(config.seed, &[SEED_DATA, 0]))
}

/// Loads or generates data and deals it out to the clients.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    let seed = derive_seed(config.seed, &[SEED_DATA]);
    let k = config.num_clients;
    let classes = config.num_classes();
    let arch = config.model_version.architecture();

    let mnist_dir = match (config.dataset, &config.mnist_dir) {
        (DatasetKind::Mnist, Some(dir)) if mnist_files_present(dir) => Some(dir.clone()),
        (DatasetKind::Mnist, Some(dir)) if config.preset == Preset::Full => {
            return Err(Error::Config(format!("MNIST files not found under {}", dir.display())))
        }
        _ => None,
    };
    let ecg_csv = match (config.dataset, &config.ecg_csv) {
        (DatasetKind::Ecg, Some(p)) if p.is_file() => Some(p.clone()),
        (DatasetKind::Ecg, Some(p)) if config.preset == Preset::Full => {
            return Err(Error::Config(format!("ECG file {} not found", p.display())))
        }
        _ => None,
    };
    if config.preset == Preset::Full && config.dataset != DatasetKind::Synth && mnist_dir.is_none() && ecg_csv.is_none() {
        return Err(Error::Config("the full preset needs dataset files (--mnist-dir / --ecg-csv)".into()));
    }

    if let Some(dir) = mnist_dir {
        let (train, test) = data::load_mnist_dir(&dir)?;
        let p = data::partition(&train, k, config.train_per_client, config.holdout_per_client, seed)?;
        let test = match config.test_size {
            Some(n) if n < test.len() => data::partition(&test, 1, n, 0, derive_seed(seed, &[1]))?.shards.remove(0).train,
            _ => test,
        };
        return Ok(PreparedData {
            shards: p.shards.into_iter().map(|s| s.train).collect(),
            test,
            source: DataSource::Files(dir.display().to_string()),
        });
    }

    match arch {
        Architecture::Mnist => {
            // generated pool: client shards plus the test set
            let test_n = config.test_size.unwrap_or(10_000);
            let total = k * (config.train_per_client + config.holdout_per_client) + test_n;
            let per_class = total.div_ceil(classes);
            let pool = standin(config, "mnist-standin", per_class)?;
            let p = data::partition(&pool, k, config.train_per_client, config.holdout_per_client, seed)?;
            let test = p.remainder.ok_or_else(|| Error::Data("no samples left for testing".into()))?;
            let test = if test.len() > test_n {
                test.subset(&(0..test_n).collect::<Vec<_>>())?
            } else {
                test
            };
            Ok(PreparedData {
                shards: p.shards.into_iter().map(|s| s.train).collect(),
                test,
                source: DataSource::Synthetic(format!("gaussian clusters, separation {}", config.synth_separation)),
            })
        }
        Architecture::Ecg => {
            let (mut full, source) = match ecg_csv {
                Some(path) => (data::load_ecg_csv(&path)?, DataSource::Files(path.display().to_string())),
                None => {
                    let total = 2 * k * config.train_per_client.max(1);
                    let total = total.max(config.test_size.map_or(0, |t| 2 * t));
                    (
                        standin(config, "ecg-standin", total.div_ceil(classes))?,
                        DataSource::Synthetic(format!("gaussian clusters, separation {}", config.synth_separation)),
                    )
                }
            };
            if config.standardize {
                full.standardize();
            }
            let (train, test) = data::split_half(&full, seed)?;
            let per_client = if config.train_per_client == 0 {
                train.len() / k
            } else {
                config.train_per_client
            };
            let p = data::partition(&train, k, per_client, config.holdout_per_client, derive_seed(seed, &[2]))?;
            let mut test = match p.remainder {
                Some(rest) => test.concat(&rest)?,
                None => test,
            };
            if let Some(n) = config.test_size.filter(|&n| n < test.len()) {
                test = test.subset(&(0..n).collect::<Vec<_>>())?;
            }
            Ok(PreparedData {
                shards: p.shards.into_iter().map(|s| s.train).collect(),
                test,
                source,
            })
        }
    }
}

/// Output of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub data_source: DataSource,
    pub malicious_clients: Vec<usize>,
    /// Attack actually applied, with source/target/flood labels filled in.
    pub resolved_attack: AttackKind,
    pub baseline_accuracy: Option<f64>,
    pub reports: Vec<MetricsReport>,
    pub model_checksum: String,
    /// Wall-clock seconds. Not serialized, so equal configs give byte-identical reports.
    #[serde(skip)]
    pub duration_secs: f64,
}

/// Equality ignores wall-clock time.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
            && self.config == other.config
            && self.data_source == other.data_source
            && self.malicious_clients == other.malicious_clients
            && self.resolved_attack == other.resolved_attack
            && self.baseline_accuracy == other.baseline_accuracy
            && self.reports == other.reports
            && self.model_checksum == other.model_checksum
    }
}

impl RunRecord {
    pub fn final_report(&self) -> &MetricsReport {
        self.reports.last().expect("at least one epoch")
    }

    pub fn accuracy(&self) -> f64 {
        self.final_report().accuracy
    }

    pub fn accuracy_drop(&self) -> Option<f64> {
        self.final_report().accuracy_drop
    }
}

/// SHA-256 over every parameter's bit pattern, in layer order.
pub fn model_checksum(model: &Model) -> String {
    let mut h = Sha256::new();
    for layer in &model.layers {
        if let Some((w, b)) = layer.params() {
            for v in w.data().iter().chain(b.data()) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Fills in attack labels. Missing source/target/flood labels come from the
/// clean baseline's per-class accuracy.
pub fn resolve_attack(config: &ExperimentConfig, baseline: Option<&RunRecord>) -> Result<AttackKind> {
    if !config.is_attacked() {
        return Ok(AttackKind::None);
    }
    let ranked = || -> Result<(usize, usize)> {
        let base = baseline.ok_or_else(|| {
            Error::Config(format!("attack {} needs explicit classes or a baseline run", config.attack))
        })?;
        auto_select_source_target(&base.final_report().confusion.per_class_accuracy())
    };
    Ok(match config.attack {
        AttackName::None => AttackKind::None,
        AttackName::UntargetedRandom => AttackKind::UntargetedRandom,
        AttackName::UntargetedFixed => AttackKind::UntargetedFixed {
            flood_label: match config.flood_label {
                Some(l) => l,
                None => ranked()?.0,
            },
        },
        AttackName::Targeted => {
            let (source, target) = match (config.source_class, config.target_class) {
                (Some(s), Some(t)) => (s, t),
                (s, t) => {
                    let (rs, rt) = ranked()?;
                    (s.unwrap_or(rs), t.unwrap_or(rt))
                }
            };
            AttackKind::Targeted { source, target }
        }
        AttackName::Distance => AttackKind::DistanceBased {
            source: match config.source_class {
                Some(s) => s,
                None => ranked()?.0,
            },
        },
    })
}

fn train_once(config: &ExperimentConfig, data: &PreparedData, attack: AttackKind, baseline: Option<&RunRecord>) -> Result<RunRecord> {
    let started = Instant::now();
    let fingerprint = config.fingerprint();
    let spec = config.model_version.default_spec();
    let malicious = config.malicious_flags();
    let attack_cfg = AttackConfig {
        kind: attack,
        seed: derive_seed(config.seed, &[SEED_ATTACK]),
        scope: config.distance_scope,
    };
    let outcome = run_training(TrainingSetup {
        spec,
        split: config.model_version.split_point(),
        shards: data.shards.clone(),
        test: data.test.clone(),
        malicious: malicious.clone(),
        attack: attack_cfg,
        epochs: config.epochs,
        init_seed: derive_seed(config.seed, &[SEED_INIT]),
        options: config.train_options(),
        fingerprint: fingerprint.clone(),
    })?;
    let clean = match baseline {
        Some(b) => Some(b.accuracy()),
        None if !config.is_attacked() => outcome.final_report().map(|r| r.accuracy),
        None => None,
    };
    let reports = outcome
        .reports
        .into_iter()
        .map(|r| match clean {
            Some(c) if r.epoch + 1 == config.epochs => r.with_baseline(c),
            _ => Ok(r),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord {
        fingerprint,
        config: config.clone(),
        data_source: data.source.clone(),
        malicious_clients: (0..malicious.len()).filter(|&k| malicious[k]).collect(),
        resolved_attack: attack,
        baseline_accuracy: clean,
        reports,
        model_checksum: model_checksum(&outcome.model),
        duration_secs: started.elapsed().as_secs_f64(),
    })
}

/// One experiment. Attacked runs first train their clean baseline, which
/// supplies automatic class choices and the accuracy drop.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    run_with_baseline(config, None)
}

pub fn run_with_baseline(config: &ExperimentConfig, baseline: Option<&RunRecord>) -> Result<RunRecord> {
    config.validate()?;
    let data = prepare_data(config)?;
    if !config.is_attacked() {
        return train_once(config, &data, AttackKind::None, None);
    }
    let owned;
    let baseline = match baseline {
        Some(b) => b,
        None => {
            owned = train_once(&config.baseline(), &data, AttackKind::None, None)?;
            &owned
        }
    };
    let attack = resolve_attack(config, Some(baseline))?;
    train_once(config, &data, attack, Some(baseline))
}

/// One row of the accuracy-drop table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub version: ModelVersion,
    pub malicious_pct: u32,
    pub attack: AttackName,
    pub accuracy: f64,
    pub accuracy_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub base_config: ExperimentConfig,
    pub records: Vec<RunRecord>,
}

impl GridReport {
    /// Baseline rows carry attack `none` and a zero drop.
    pub fn rows(&self) -> Vec<GridRow> {
        self.records
            .iter()
            .map(|r| GridRow {
                version: r.config.model_version,
                malicious_pct: r.config.malicious_pct,
                attack: r.config.attack,
                accuracy: r.accuracy(),
                accuracy_drop: r.accuracy_drop().unwrap_or(0.0),
            })
            .collect()
    }
}

/// Baseline per version, then every attack at every nonzero percentage.
/// Cells after the baselines are independent and run in parallel.
pub fn run_grid(
    base: &ExperimentConfig,
    malicious_pcts: &[u32],
    attacks: &[AttackName],
    versions: &[ModelVersion],
) -> Result<GridReport> {
    let mut records = Vec::new();
    for &version in versions {
        let mut clean = base.baseline();
        clean.model_version = version;
        clean.validate()?;
        let baseline = run(&clean)?;

        let cells: Vec<ExperimentConfig> = attacks
            .iter()
            .filter(|&&a| a != AttackName::None)
            .flat_map(|&attack| {
                malicious_pcts.iter().filter(|&&p| p > 0).map(move |&pct| (attack, pct))
            })
            .map(|(attack, pct)| ExperimentConfig {
                attack,
                malicious_pct: pct,
                model_version: version,
                ..base.clone()
            })
            .collect();
        for c in &cells {
            c.validate()?;
        }
        let attacked = cells
            .par_iter()
            .map(|c| run_with_baseline(c, Some(&baseline)))
            .collect::<Result<Vec<_>>>()?;
        records.push(baseline);
        records.extend(attacked);
    }
    Ok(GridReport {
        base_config: base.clone(),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "table.csv",
            ReportFormat::Markdown => "table.md",
        }
    }
}

pub const CSV_HEADER: &str = "version,pct,attack,A,A_d";

pub fn table_csv(rows: &[GridRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.2},{:.2}", r.version, r.malicious_pct, r.attack, r.accuracy, r.accuracy_drop);
    }
    out
}

/// Parses what [`table_csv`] writes; values come back at two decimals.
pub fn parse_table_csv(text: &str) -> Result<Vec<GridRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Config(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected table header {header:?}")));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Config(format!("bad number {:?}", &rec[i])))
            };
            Ok(GridRow {
                version: rec[0].parse()?,
                malicious_pct: rec[1].parse().map_err(|_| Error::Config(format!("bad pct {:?}", &rec[1])))?,
                attack: rec[2].parse()?,
                accuracy: num(3)?,
                accuracy_drop: num(4)?,
            })
        })
        .collect()
}

pub fn table_markdown(rows: &[GridRow]) -> String {
    let mut out = String::from("| version | pct | attack | A | A_d |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} | {:.2} |",
            r.version, r.malicious_pct, r.attack, r.accuracy, r.accuracy_drop
        );
    }
    out
}

/// Per-class precision / recall / F-score, one row per class and one column
/// triple per run.
pub fn prf_markdown(records: &[&RunRecord]) -> String {
    let mut out = String::from("| class |");
    let mut rule = String::from("|---|");
    for r in records {
        let label = format!("{} {}% {}", r.config.model_version, r.config.malicious_pct, r.config.attack);
        let _ = write!(out, " {label} P | R | F |");
        rule.push_str("---|---|---|");
    }
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    let classes = records.first().map_or(0, |r| r.final_report().per_class.len());
    for c in 0..classes {
        let _ = write!(out, "| {c} |");
        for r in records {
            let m = r.final_report().per_class[c];
            let _ = write!(out, " {:.2} | {:.2} | {:.2} |", m.precision, m.recall, m.fscore);
        }
        out.push('\n');
    }
    out
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the grid report in `format` under `out_dir`; returns the file path.
pub fn emit_report(report: &GridReport, format: ReportFormat, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join(format.file_name());
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => table_csv(&report.rows()),
        ReportFormat::Markdown => {
            let refs: Vec<&RunRecord> = report.records.iter().collect();
            format!(
                "{}\n### Per-class precision, recall and F-score\n\n{}",
                table_markdown(&report.rows()),
                prf_markdown(&refs)
            )
        }
    };
    write_atomic(&path, &text)?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<GridReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(DatasetKind::Synth, ModelVersion::EcgV1, Preset::Desk);
        c.num_clients = 2;
        c.train_per_client = 20;
        c.test_size = Some(20);
        c.epochs = 1;
        c
    }

    #[test]
    fn malicious_count_rounds() {
        let mut c = tiny();
        c.num_clients = 10;
        c.malicious_pct = 20;
        assert_eq!(c.malicious_count(), 2);
        assert_eq!(c.malicious_flags()[..3], [true, true, false]);
        c.num_clients = 5;
        c.malicious_pct = 10;
        assert_eq!(c.malicious_count(), 1); // 0.5 rounds up
        c.malicious_pct = 0;
        assert_eq!(c.malicious_count(), 0);
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let mut c = tiny();
        c.dataset = DatasetKind::Mnist;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.malicious_pct = 101;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.flood_label = Some(5);
        assert!(c.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = tiny();
        let mut b = tiny();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn explicit_classes_need_no_baseline() {
        let mut c = tiny();
        c.malicious_pct = 50;
        c.attack = AttackName::Targeted;
        c.source_class = Some(1);
        c.target_class = Some(2);
        assert_eq!(resolve_attack(&c, None).unwrap(), AttackKind::Targeted { source: 1, target: 2 });
        c.target_class = None;
        assert!(resolve_attack(&c, None).is_err());
        c.malicious_pct = 0;
        assert_eq!(resolve_attack(&c, None).unwrap(), AttackKind::None);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![GridRow {
            version: ModelVersion::EcgV2,
            malicious_pct: 40,
            attack: AttackName::UntargetedFixed,
            accuracy: 26.5,
            accuracy_drop: 71.31,
        }];
        assert_eq!(parse_table_csv(&table_csv(&rows)).unwrap(), rows);
        assert!(parse_table_csv("a,b\n").is_err());
    }
}
