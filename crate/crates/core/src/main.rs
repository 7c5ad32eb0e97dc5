use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sflpl::experiment::{
    emit_report, run, run_grid, DatasetKind, ExperimentConfig, GridReport, Preset, ReportFormat,
};
use sflpl::model::ModelVersion;
use sflpl::poisoning::{AttackName, DistanceScope};
use sflpl::protocol::AggregationSchedule;
use sflpl::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sflpl", version, about = "SplitFed learning under label-flipping attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration and write its report.
    Run(RunArgs),
    /// Baselines plus every attack at every malicious percentage.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, env = "SFLPL_MODEL_VERSION")]
    model_version: Option<ModelVersion>,
    #[arg(long, env = "SFLPL_MALICIOUS_PCT", default_value_t = 0)]
    malicious_pct: u32,
    #[arg(long, env = "SFLPL_ATTACK", default_value = "none")]
    attack: AttackName,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40")]
    pcts: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "untargeted-fixed,targeted,distance")]
    attacks: Vec<AttackName>,
    /// Defaults to both versions of the dataset's architecture.
    #[arg(long, value_delimiter = ',')]
    versions: Vec<ModelVersion>,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, env = "SFLPL_DATASET", default_value = "ecg")]
    dataset: DatasetKind,
    #[arg(long, env = "SFLPL_PRESET", default_value = "desk")]
    preset: Preset,
    #[arg(long, env = "SFLPL_CLIENTS")]
    clients: Option<usize>,
    #[arg(long, env = "SFLPL_SOURCE_CLASS")]
    source_class: Option<usize>,
    #[arg(long, env = "SFLPL_TARGET_CLASS")]
    target_class: Option<usize>,
    #[arg(long, env = "SFLPL_FLOOD_LABEL")]
    flood_label: Option<usize>,
    #[arg(long, env = "SFLPL_DISTANCE_SCOPE", value_parser = ["batch", "shard"])]
    distance_scope: Option<String>,
    #[arg(long, env = "SFLPL_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "SFLPL_LR")]
    lr: Option<f64>,
    #[arg(long, env = "SFLPL_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "SFLPL_SEED", default_value_t = 0)]
    seed: u64,
    /// Aggregate after every lockstep batch instead of once per epoch.
    #[arg(long, env = "SFLPL_PER_BATCH_AGGREGATION")]
    per_batch_aggregation: bool,
    #[arg(long, env = "SFLPL_TRAIN_PER_CLIENT")]
    train_per_client: Option<usize>,
    #[arg(long, env = "SFLPL_TEST_SIZE")]
    test_size: Option<usize>,
    /// Class separation of generated data, in within-class standard deviations.
    #[arg(long, env = "SFLPL_SEPARATION")]
    separation: Option<f64>,
    /// Per-feature standardization of ECG inputs.
    #[arg(long, env = "SFLPL_STANDARDIZE")]
    standardize: bool,
    #[arg(long, env = "SFLPL_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
    #[arg(long, env = "SFLPL_ECG_CSV")]
    ecg_csv: Option<PathBuf>,
    #[arg(long, env = "SFLPL_OUT", default_value = "results")]
    out: PathBuf,
    /// json, csv, markdown or all.
    #[arg(long, env = "SFLPL_FORMAT", default_value = "all")]
    format: String,
}

impl CommonArgs {
    fn config(&self, version: ModelVersion) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(self.dataset, version, self.preset);
        c.source_class = self.source_class;
        c.target_class = self.target_class;
        c.flood_label = self.flood_label;
        c.seed = self.seed;
        c.standardize = self.standardize;
        c.mnist_dir = self.mnist_dir.clone();
        c.ecg_csv = self.ecg_csv.clone();
        if self.per_batch_aggregation {
            c.aggregation = AggregationSchedule::PerBatch;
        }
        if self.distance_scope.as_deref() == Some("shard") {
            c.distance_scope = DistanceScope::Shard;
        }
        if let Some(v) = self.clients {
            c.num_clients = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.train_per_client {
            c.train_per_client = v;
        }
        if let Some(v) = self.separation {
            c.synth_separation = v;
        }
        if let Some(v) = self.test_size {
            c.test_size = Some(v);
        }
        c
    }

    fn formats(&self) -> Result<Vec<ReportFormat>> {
        match self.format.as_str() {
            "all" => Ok(vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown]),
            f => Ok(vec![f.parse()?]),
        }
    }

    fn default_version(&self) -> ModelVersion {
        match self.dataset {
            DatasetKind::Mnist => ModelVersion::MnistV1,
            DatasetKind::Ecg | DatasetKind::Synth => ModelVersion::EcgV1,
        }
    }
}

fn write_all(report: &GridReport, common: &CommonArgs) -> Result<()> {
    for format in common.formats()? {
        let path = emit_report(report, format, &common.out)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let version = args.model_version.unwrap_or_else(|| args.common.default_version());
            let mut config = args.common.config(version);
            config.malicious_pct = args.malicious_pct;
            config.attack = args.attack;
            config.validate()?;
            let record = run(&config)?;
            eprintln!(
                "accuracy {:.2}% in {:.1}s",
                record.accuracy(),
                record.duration_secs
            );
            let report = GridReport {
                base_config: config,
                records: vec![record],
            };
            write_all(&report, &args.common)
        }
        Command::Grid(args) => {
            let versions = if args.versions.is_empty() {
                ModelVersion::ALL
                    .into_iter()
                    .filter(|v| v.architecture() == args.common.default_version().architecture())
                    .collect()
            } else {
                args.versions.clone()
            };
            let base = args.common.config(versions[0]);
            let report = run_grid(&base, &args.pcts, &args.attacks, &versions)?;
            write_all(&report, &args.common)
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &single_line(&e)),
    }
}

fn single_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}
