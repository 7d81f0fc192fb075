//! Run directories and the end-to-end experiment flows behind the CLI:
//! the three training stages, baselines, sweeps and evaluation reports.
//!
//! A run lives in `output_root/<run_id>/` with the subdirectories
//! `config/` (resolved configuration), `checkpoints/` (models and resumable
//! snapshots), `metrics/` (record file, tables and plots) and `logs/`.
//! `manifest.json` lists every artifact written so far.

pub mod plot;
mod report;
mod stages;
mod sweeps;

pub use report::{evaluate_run, Baseline, BaselineRow, EvalRefs, EvalReport, ResolutionRow};
pub use stages::{
    continuation, finetune, load_expert, train_expert, train_i2i, train_m3, ExpertReport, FinetuneReport, I2iReport,
    PhaseResult,
};
pub use sweeps::{median, sweep_alpha, sweep_gt, AlphaSummary, AlphaSweep, GtRow, GtSummary, GtSweep};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig};
use crate::data::{generate_toy_dataset, load_directory_dataset, save_split_dir};
use crate::datamodel::{validate_dataset, DatasetSplit, Domain};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{append_records, MetricRecord};

/// The four splits every experiment uses.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub synthetic_train: DatasetSplit,
    pub synthetic_val: DatasetSplit,
    pub real_train: DatasetSplit,
    pub real_val: DatasetSplit,
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let c = cfg.num_classes();
    let data = match &cfg.data {
        DataConfig::Toy {
            world,
            synthetic_train,
            synthetic_val,
            real_train,
            real_val,
        } => {
            let gen = |k: u64, n: usize, domain: Domain| {
                let spec = crate::data::ToyWorldSpec {
                    seed: world.seed.wrapping_add(k),
                    ..world.clone()
                };
                generate_toy_dataset(&spec, n, domain, cfg.task)
            };
            Datasets {
                synthetic_train: gen(1, *synthetic_train, Domain::Synthetic)?,
                synthetic_val: gen(2, *synthetic_val, Domain::Synthetic)?,
                real_train: gen(3, *real_train, Domain::Real)?,
                real_val: gen(4, *real_val, Domain::Real)?,
            }
        }
        DataConfig::Directory { root, .. } => {
            if !root.is_dir() {
                return Err(Error::load(root, "dataset root not found"));
            }
            let load = |domain, split| load_directory_dataset(root, domain, split, cfg.task, c);
            Datasets {
                synthetic_train: load(Domain::Synthetic, "train")?,
                synthetic_val: load(Domain::Synthetic, "val")?,
                real_train: load(Domain::Real, "train")?,
                real_val: load(Domain::Real, "val")?,
            }
        }
    };
    for (name, split) in data.named() {
        let report = validate_dataset(split);
        if let Some(v) = report.violations.first() {
            return Err(Error::usage(format!(
                "{name} split is invalid ({} violations), first: {v}",
                report.violations.len()
            )));
        }
    }
    for (name, split) in [
        ("synthetic train", &data.synthetic_train),
        ("synthetic val", &data.synthetic_val),
    ] {
        if split.num_labeled() != split.len() {
            return Err(Error::usage(format!("{name} split must be fully labeled")));
        }
    }
    if data.real_val.num_labeled() == 0 {
        return Err(Error::usage("real validation split has no labels"));
    }
    let shapes: Vec<_> = data.named().iter().map(|(_, s)| s.image_shape()).collect();
    if shapes.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::usage(format!("splits disagree on image shape: {shapes:?}")));
    }
    Ok(data)
}

impl Datasets {
    fn named(&self) -> [(&'static str, &DatasetSplit); 4] {
        [
            ("synthetic train", &self.synthetic_train),
            ("synthetic val", &self.synthetic_val),
            ("real train", &self.real_train),
            ("real val", &self.real_val),
        ]
    }
}

/// Write the configured toy world to disk in the directory layout.
pub fn generate_toy(cfg: &ExperimentConfig, root: &Path) -> Result<Datasets> {
    if !matches!(cfg.data, DataConfig::Toy { .. }) {
        return Err(Error::usage(
            "generate-toy needs a config whose data source is the toy world",
        ));
    }
    let data = load_datasets(cfg)?;
    for (domain, split, name) in [
        (Domain::Synthetic, &data.synthetic_train, "train"),
        (Domain::Synthetic, &data.synthetic_val, "val"),
        (Domain::Real, &data.real_train, "train"),
        (Domain::Real, &data.real_val, "val"),
    ] {
        save_split_dir(&crate::data::directory::split_dir(root, domain, name), split)?;
    }
    Ok(data)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    run_id: String,
    config: String,
    artifacts: BTreeMap<String, String>,
}

/// Handle on one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    run_id: String,
}

impl RunDir {
    /// Create the directory tree and write the resolved config (before any
    /// training starts). `command` names an extra copy of the config.
    pub fn create(cfg: &ExperimentConfig, command: &str) -> Result<Self> {
        let run = Self {
            root: cfg.run_dir(),
            run_id: cfg.run_id.clone(),
        };
        for sub in ["config", "checkpoints", "metrics", "logs"] {
            io::create_dir(&run.root.join(sub))?;
        }
        let text = cfg.to_toml()?;
        io::write_string_atomic(&run.root.join("config").join("resolved.toml"), &text)?;
        io::write_string_atomic(&run.root.join("config").join(format!("{command}.toml")), &text)?;
        run.register(
            &format!("config/{command}"),
            Path::new("config").join(format!("{command}.toml")),
        )?;
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn metrics_path(&self, name: &str) -> PathBuf {
        self.root.join("metrics").join(name)
    }

    pub fn records_path(&self) -> PathBuf {
        self.metrics_path("records.csv")
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Record an artifact (path relative to the run root) in the manifest.
    pub fn register(&self, key: &str, rel: impl AsRef<Path>) -> Result<()> {
        let path = self.manifest_path();
        let mut m: Manifest = if path.exists() {
            serde_json::from_str(&io::read_string(&path)?).map_err(|e| Error::load(&path, e.to_string()))?
        } else {
            Manifest::default()
        };
        m.run_id = self.run_id.clone();
        m.config = "config/resolved.toml".into();
        m.artifacts
            .insert(key.to_owned(), rel.as_ref().to_string_lossy().replace('\\', "/"));
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Checkpoint(e.to_string()))?;
        io::write_string_atomic(&path, &text)
    }

    /// Relative path of an absolute artifact path inside this run.
    fn rel(&self, path: &Path) -> PathBuf {
        path.strip_prefix(&self.root).unwrap_or(path).to_path_buf()
    }

    pub fn write_artifact(&self, key: &str, path: &Path, bytes: &[u8]) -> Result<()> {
        io::write_atomic(path, bytes)?;
        self.register(key, self.rel(path))
    }

    pub fn append_records(&self, records: &[MetricRecord]) -> Result<()> {
        append_records(&self.records_path(), records)?;
        self.register("metrics/records", "metrics/records.csv")
    }

    /// Append a line to `logs/run.log` and forward it to the logger.
    pub fn log(&self, msg: &str) {
        log::info!("{msg}");
        let path = self.root.join("logs").join("run.log");
        let line = format!("{msg}\n");
        let res = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, line.as_bytes()));
        if let Err(e) = res {
            log::warn!("cannot append to {}: {e}", path.display());
        }
    }

    pub fn warn(&self, msg: &str) {
        log::warn!("{msg}");
        self.log(&format!("warning: {msg}"));
    }

    /// Store the inputs that produced an artifact, or check that a stored
    /// set matches. Guards resumption against silently mixing configs.
    fn guard(&self, name: &str, key: &serde_json::Value) -> Result<()> {
        let path = self.checkpoint(&format!("{name}.key.json"));
        // Compared as text: parsed floats need not round-trip bit-exactly.
        let text = serde_json::to_string_pretty(key).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if path.exists() {
            if io::read_string(&path)? != text {
                return Err(Error::usage(format!(
                    "{} was produced with a different configuration; use a new run_id or remove the run directory",
                    path.display()
                )));
            }
            return Ok(());
        }
        io::write_string_atomic(&path, &text)
    }

    /// Write a plot, downgrading any failure to a warning.
    pub fn write_plot(&self, key: &str, name: &str, chart: &plot::Chart) {
        let path = self.metrics_path(name);
        let res = chart.render().map_err(|e| e.to_string()).and_then(|svg| {
            self.write_artifact(key, &path, svg.as_bytes())
                .map_err(|e| e.to_string())
        });
        if let Err(e) = res {
            self.warn(&format!("plot {name} not written: {e}"));
        }
    }

    /// Write a delimited table from a header and rows.
    pub fn write_table(&self, key: &str, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::load(self.metrics_path(name), e.to_string());
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::load(self.metrics_path(name), e.to_string()))?;
        self.write_artifact(key, &self.metrics_path(name), &bytes)
    }
}

/// Everything a command needs: validated config, run directory, data.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub run: RunDir,
    pub data: Datasets,
}

impl Context {
    pub fn open(cfg: ExperimentConfig, command: &str) -> Result<Self> {
        cfg.check()?;
        let run = RunDir::create(&cfg, command)?;
        run.log(&format!("{command}: run {} in {}", cfg.run_id, run.root().display()));
        let data = load_datasets(&cfg)?;
        Ok(Self { cfg, run, data })
    }

    pub fn segmentation(&self) -> bool {
        self.cfg.task == crate::networks::Head::Segmenter
    }
}

/// Format a float for file names: `0.8 -> "0.8"`, `10.0 -> "10"`.
fn tag_num(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m")
}
