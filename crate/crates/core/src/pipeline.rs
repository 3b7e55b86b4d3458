//! The full study as library calls: synthesize data, train on EO, fine-tune
//! on SAR, evaluate, collect reports and render CAM panels.
//!
//! Every command reads a [`RunConfig`] and works inside one output
//! directory:
//!
//! ```text
//! <out>/eo/, <out>/sar/          synthetic datasets (manifest.csv, images/, boxes.csv)
//! <out>/eo_model.ckpt            EO-trained checkpoint
//! <out>/eo_train_log.csv
//! <out>/tl_model.ckpt            SAR fine-tuned checkpoint
//! <out>/tl_train_log.csv
//! <out>/{eo,tl}_report.{json,csv}
//! <out>/report.csv               both reports
//! <out>/cam/*.png
//! <out>/run.cfg                  effective config of the last command
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cam::{self, CamMethod, Heatmap};
use crate::dataset::{
    generate_synthetic, load_boxes, load_manifest, stratified_split, write_dataset, ChipRecord, Label, ShipBox,
    SplitSpec, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::model::{self, Checkpoint, ModelParams, NetworkConfig};
use crate::optim::{self, EpochRecord, TrainConfig, TrainLog, TrainSet};
use crate::tensor::Tensor;

pub const EO_CHECKPOINT: &str = "eo_model.ckpt";
pub const TL_CHECKPOINT: &str = "tl_model.ckpt";
pub const EO_LOG: &str = "eo_train_log.csv";
pub const TL_LOG: &str = "tl_train_log.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const EO_LABEL: &str = "Only EO";
pub const TL_LABEL: &str = "TL to SAR";

const INFER_BATCH: usize = 64;

/// Everything a command needs. Serialized as flat `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub eo_epochs: usize,
    pub tl_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Layers frozen while fine-tuning.
    pub frozen: Vec<String>,
    pub positive_train_fraction: f64,
    pub negative_train_fraction: f64,
    pub eo_ships: usize,
    pub eo_no_ships: usize,
    pub sar_ships: usize,
    pub sar_no_ships: usize,
    /// Root holding `eo/` and `sar/`; defaults to the output directory.
    pub data_dir: Option<PathBuf>,
    pub cam_method: CamMethod,
    /// Chips rendered by `cam` when no ids are given.
    pub cam_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitSpec::default();
        RunConfig {
            seed: 0,
            network: NetworkConfig::default(),
            eo_epochs: TrainConfig::eo().epochs,
            tl_epochs: TrainConfig::finetune().epochs,
            batch_size: TrainConfig::eo().batch_size,
            learning_rate: TrainConfig::eo().learning_rate,
            frozen: TrainConfig::finetune().frozen,
            positive_train_fraction: split.positive_train_fraction,
            negative_train_fraction: split.negative_train_fraction,
            eo_ships: 1000,
            eo_no_ships: 3000,
            sar_ships: 1596,
            sar_no_ships: 7980,
            data_dir: None,
            cam_method: CamMethod::GradCam,
            cam_count: 8,
        }
    }
}

fn method_token(m: CamMethod) -> &'static str {
    match m {
        CamMethod::GradCam => "grad_cam",
        CamMethod::GapCam => "gap_cam",
    }
}

pub fn parse_method(s: &str) -> Result<CamMethod> {
    match s.trim() {
        "grad_cam" | "grad" => Ok(CamMethod::GradCam),
        "gap_cam" | "gap" => Ok(CamMethod::GapCam),
        other => Err(Error::Config(format!("unknown CAM method {other:?}"))),
    }
}

impl RunConfig {
    /// Set one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.network.set(key, value)? {
            return Ok(());
        }
        let bad = || Error::Config(format!("invalid value {value:?} for {key}"));
        let int = || value.trim().parse::<usize>().map_err(|_| bad());
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        match key {
            "seed" => self.seed = value.trim().parse().map_err(|_| bad())?,
            "eo.epochs" => self.eo_epochs = int()?,
            "tl.epochs" => self.tl_epochs = int()?,
            "batch_size" => self.batch_size = int()?,
            "learning_rate" => self.learning_rate = float()?,
            "tl.frozen" => {
                self.frozen = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "split.positive_fraction" => self.positive_train_fraction = float()?,
            "split.negative_fraction" => self.negative_train_fraction = float()?,
            "synth.eo_ships" => self.eo_ships = int()?,
            "synth.eo_no_ships" => self.eo_no_ships = int()?,
            "synth.sar_ships" => self.sar_ships = int()?,
            "synth.sar_no_ships" => self.sar_no_ships = int()?,
            "data_dir" => self.data_dir = (!value.trim().is_empty()).then(|| PathBuf::from(value.trim())),
            "cam.method" => self.cam_method = parse_method(value)?,
            "cam.count" => self.cam_count = int()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("seed".to_string(), self.seed.to_string())];
        out.extend(self.network.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("eo.epochs", self.eo_epochs.to_string());
        push("tl.epochs", self.tl_epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push("learning_rate", self.learning_rate.to_string());
        push("tl.frozen", self.frozen.join(","));
        push("split.positive_fraction", self.positive_train_fraction.to_string());
        push("split.negative_fraction", self.negative_train_fraction.to_string());
        push("synth.eo_ships", self.eo_ships.to_string());
        push("synth.eo_no_ships", self.eo_no_ships.to_string());
        push("synth.sar_ships", self.sar_ships.to_string());
        push("synth.sar_no_ships", self.sar_no_ships.to_string());
        push("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        push("cam.method", method_token(self.cam_method).to_string());
        push("cam.count", self.cam_count.to_string());
        out
    }

    /// Parse `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.split().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning_rate {}", self.learning_rate)));
        }
        self.tl_train().frozen_parameters().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::new(self.seed)
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            positive_train_fraction: self.positive_train_fraction,
            negative_train_fraction: self.negative_train_fraction,
            seed: self.seeds().split,
        }
    }

    pub fn eo_train(&self) -> TrainConfig {
        let seeds = self.seeds();
        TrainConfig {
            epochs: self.eo_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            frozen: Vec::new(),
            shuffle_seed: seeds.shuffle,
            dropout_seed: seeds.dropout,
        }
    }

    pub fn tl_train(&self) -> TrainConfig {
        let seeds = self.seeds();
        TrainConfig {
            epochs: self.tl_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            frozen: self.frozen.clone(),
            shuffle_seed: derive_seed(seeds.shuffle, "finetune"),
            dropout_seed: derive_seed(seeds.dropout, "finetune"),
        }
    }

    pub fn eo_synth(&self) -> SyntheticConfig {
        let seed = derive_seed(self.seeds().synth, "eo");
        SyntheticConfig::eo(self.network.input_size, self.eo_ships, self.eo_no_ships, seed)
    }

    pub fn sar_synth(&self) -> SyntheticConfig {
        let seed = derive_seed(self.seeds().synth, "sar");
        SyntheticConfig::sar(self.network.input_size, self.sar_ships, self.sar_no_ships, seed)
    }

    fn data_root(&self, out: &Path) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| out.to_path_buf())
    }
}

/// Named sub-seeds derived from one global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub dropout: u64,
    pub synth: u64,
}

impl Seeds {
    pub fn new(seed: u64) -> Seeds {
        Seeds {
            split: derive_seed(seed, "split"),
            init: derive_seed(seed, "init"),
            shuffle: derive_seed(seed, "shuffle"),
            dropout: derive_seed(seed, "dropout"),
            synth: derive_seed(seed, "synth"),
        }
    }
}

/// FNV-1a of `name` mixed into `seed` with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn write_run_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join("run.cfg");
    fs::write(&path, cfg.to_text()).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn is_nonempty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Decode every record to a `[3, size, size]` tensor, in order.
pub fn load_chips(records: &[ChipRecord], size: usize) -> Result<Vec<Tensor<f32>>> {
    records.par_iter().map(|r| r.tensor(size)).collect()
}

pub fn train_set(records: &[ChipRecord], size: usize) -> Result<TrainSet> {
    Ok(TrainSet {
        chips: load_chips(records, size)?,
        labels: records.iter().map(|r| r.label.index()).collect(),
    })
}

/// Write `<out>/eo` and `<out>/sar`. Existing non-empty trees are replaced
/// only with `force`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    cfg.validate()?;
    for (name, synth) in [("eo", cfg.eo_synth()), ("sar", cfg.sar_synth())] {
        let dir = out.join(name);
        if is_nonempty_dir(&dir) {
            if !force {
                return Err(Error::Config(format!("{} is not empty; pass --force to overwrite", dir.display())));
            }
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let set = generate_synthetic(&synth)?;
        write_dataset(&dir, &set.records, Some(&set.boxes))?;
        fs::write(dir.join("synth.cfg"), cfg.to_text()).map_err(|e| Error::io(&dir, e))?;
    }
    write_run_config(cfg, out)
}

fn provenance(cfg: &RunConfig, phase: &str) -> BTreeMap<String, String> {
    let seeds = cfg.seeds();
    BTreeMap::from([
        ("phase".to_string(), phase.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("seed.init".to_string(), seeds.init.to_string()),
        ("seed.split".to_string(), seeds.split.to_string()),
        ("seed.shuffle".to_string(), seeds.shuffle.to_string()),
        ("seed.dropout".to_string(), seeds.dropout.to_string()),
    ])
}

/// Train from scratch on every EO chip.
pub fn cmd_train(cfg: &RunConfig, out: &Path, progress: impl FnMut(&EpochRecord)) -> Result<TrainLog> {
    cfg.validate()?;
    ensure_dir(out)?;
    let records = load_manifest(&cfg.data_root(out).join("eo"))?;
    let data = train_set(&records, cfg.network.input_size)?;
    let init = model::build(&cfg.network, cfg.seeds().init)?;
    let (params, log) = optim::train_with_progress(init, &cfg.network, &cfg.eo_train(), &data, progress)?;
    let ckpt = Checkpoint { config: cfg.network.clone(), params, meta: provenance(cfg, "eo") };
    ckpt.save(&out.join(EO_CHECKPOINT))?;
    log.write_csv(&out.join(EO_LOG))?;
    write_run_config(cfg, out)?;
    Ok(log)
}

/// Train and test splits of the SAR dataset.
pub fn sar_split(cfg: &RunConfig, out: &Path) -> Result<(Vec<ChipRecord>, Vec<ChipRecord>)> {
    let records = load_manifest(&cfg.data_root(out).join("sar"))?;
    stratified_split(records, &cfg.split())
}

/// Fine-tune `checkpoint` (default `<out>/eo_model.ckpt`) on the SAR training split.
pub fn cmd_finetune(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: Option<&Path>,
    progress: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    ensure_dir(out)?;
    let source = checkpoint.map_or_else(|| out.join(EO_CHECKPOINT), Path::to_path_buf);
    let base = Checkpoint::load(&source)?;
    if base.config != cfg.network {
        return Err(Error::Architecture(format!(
            "{} was built for {:?}, config asks for {:?}",
            source.display(),
            base.config,
            cfg.network
        )));
    }
    let (train, _) = sar_split(cfg, out)?;
    let data = train_set(&train, cfg.network.input_size)?;
    let (params, log) = optim::train_with_progress(base.params, &base.config, &cfg.tl_train(), &data, progress)?;
    let mut meta = provenance(cfg, "tl");
    // File name only: an absolute path would make otherwise identical runs differ.
    let name = source.file_name().map_or_else(|| source.display().to_string(), |n| n.to_string_lossy().into_owned());
    meta.insert("source".into(), name);
    Checkpoint { config: base.config, params, meta }.save(&out.join(TL_CHECKPOINT))?;
    log.write_csv(&out.join(TL_LOG))?;
    write_run_config(cfg, out)?;
    Ok(log)
}

/// Labels predicted for `records` by a model.
pub fn predict_records(params: &ModelParams<f32>, config: &NetworkConfig, records: &[ChipRecord]) -> Result<Vec<Label>> {
    let chips = load_chips(records, config.input_size)?;
    Ok(model::predict(params, config, &chips, INFER_BATCH)?
        .into_iter()
        .map(|i| Label::from_index(i).expect("binary classifier"))
        .collect())
}

fn report_stem(checkpoint: &Path) -> String {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("_model").map(String::from).unwrap_or(stem)
}

fn training_label(ckpt: &Checkpoint, stem: &str) -> String {
    match ckpt.meta.get("phase").map(String::as_str) {
        Some("eo") => EO_LABEL.to_string(),
        Some("tl") => TL_LABEL.to_string(),
        _ => stem.to_string(),
    }
}

/// Evaluate checkpoints on the SAR test split. Without an explicit
/// checkpoint, both `eo_model.ckpt` and `tl_model.ckpt` are evaluated when
/// present. Writes `<stem>_report.json` and `<stem>_report.csv`.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    ensure_dir(out)?;
    let paths: Vec<PathBuf> = match checkpoint {
        Some(p) => vec![p.to_path_buf()],
        None => {
            let found: Vec<PathBuf> =
                [EO_CHECKPOINT, TL_CHECKPOINT].iter().map(|n| out.join(n)).filter(|p| p.is_file()).collect();
            if found.is_empty() {
                return Err(Error::MissingCheckpoint(out.join(EO_CHECKPOINT)));
            }
            found
        }
    };
    let (_, test) = sar_split(cfg, out)?;
    let mut reports = Vec::new();
    for path in paths {
        let ckpt = Checkpoint::load(&path)?;
        let stem = report_stem(&path);
        let predictions = predict_records(&ckpt.params, &ckpt.config, &test)?;
        let mut report = eval::stratified_report(&predictions, &test, &training_label(&ckpt, &stem))?;
        report.seed = Some(cfg.seed);
        eval::write_json(&report, &out.join(format!("{stem}_report.json")))?;
        eval::write_csv(std::slice::from_ref(&report), &out.join(format!("{stem}_report.csv")))?;
        reports.push(report);
    }
    write_run_config(cfg, out)?;
    Ok(reports)
}

/// Combine `eo_report.json` and `tl_report.json` into `report.csv`.
pub fn cmd_report(out: &Path) -> Result<Vec<EvalReport>> {
    let reports: Vec<EvalReport> = ["eo_report.json", "tl_report.json"]
        .iter()
        .map(|n| out.join(n))
        .filter(|p| p.is_file())
        .map(|p| eval::read_json(&p))
        .collect::<Result<_>>()?;
    if reports.is_empty() {
        return Err(Error::Data(format!("no reports in {}; run eval first", out.display())));
    }
    eval::write_csv(&reports, &out.join(REPORT_CSV))?;
    Ok(reports)
}

#[derive(Debug, Clone, Default)]
pub struct CamRequest {
    /// Single model to explain; defaults to `tl_model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    /// Two models rendered side by side (chip | before | after).
    pub panels: Option<(PathBuf, PathBuf)>,
    /// Manifest ids of SAR chips; defaults to the first positives of the test split.
    pub ids: Vec<String>,
    /// Target class; defaults to each model's predicted class.
    pub class: Option<Label>,
}

/// Resolve a `--panels` value: `before` and `after` name the EO and
/// fine-tuned checkpoints in `out`; anything else is a path.
pub fn panel_path(token: &str, out: &Path) -> PathBuf {
    match token.trim() {
        "before" => out.join(EO_CHECKPOINT),
        "after" => out.join(TL_CHECKPOINT),
        other => PathBuf::from(other),
    }
}

fn explain(ckpt: &Checkpoint, method: CamMethod, chip: &Tensor<f32>, class: Option<Label>) -> Result<Heatmap> {
    let target = match class {
        Some(l) => l.index(),
        None => cam::predicted_class(&ckpt.params, &ckpt.config, chip)?,
    };
    cam::compute(method, &ckpt.params, &ckpt.config, chip, target)
}

/// Render overlays into `<out>/cam/`. Returns the written files.
pub fn cmd_cam(cfg: &RunConfig, out: &Path, request: &CamRequest) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let models: Vec<Checkpoint> = match &request.panels {
        Some((before, after)) => vec![Checkpoint::load(before)?, Checkpoint::load(after)?],
        None => {
            let path = request.checkpoint.clone().unwrap_or_else(|| out.join(TL_CHECKPOINT));
            vec![Checkpoint::load(&path)?]
        }
    };
    let size = models[0].config.input_size;
    if models.iter().any(|m| m.config.input_size != size) {
        return Err(Error::Architecture("panel models disagree on input size".into()));
    }

    let chosen: Vec<ChipRecord> = if request.ids.is_empty() {
        let (_, test) = sar_split(cfg, out)?;
        test.into_iter().filter(|r| r.label == Label::Ship).take(cfg.cam_count).collect()
    } else {
        let all = load_manifest(&cfg.data_root(out).join("sar"))?;
        request
            .ids
            .iter()
            .map(|id| {
                all.iter()
                    .find(|r| &r.id == id)
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("no chip {id:?} in the SAR manifest")))
            })
            .collect::<Result<_>>()?
    };

    let dir = out.join("cam");
    ensure_dir(&dir)?;
    let mut written = Vec::new();
    for record in &chosen {
        let chip = record.tensor(size)?;
        let maps: Vec<Heatmap> = models
            .iter()
            .map(|m| explain(m, cfg.cam_method, &chip, request.class))
            .collect::<Result<_>>()?;
        let name = Path::new(&record.id).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let path = dir.join(format!("{name}.png"));
        cam::render_panels(&chip, &maps.iter().collect::<Vec<_>>(), &path)?;
        written.push(path);
    }
    Ok(written)
}

/// How often the CAM peak lies in the ground-truth box grown by one Conv3 cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Localization {
    pub hits: usize,
    pub total: usize,
}

impl Localization {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// Positives of `records` that the model labels as ships, paired with their boxes.
pub fn detected_positives(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    records: &[ChipRecord],
    boxes: &[ShipBox],
) -> Result<Vec<(ChipRecord, ShipBox)>> {
    let positives: Vec<ChipRecord> = records.iter().filter(|r| r.label == Label::Ship).cloned().collect();
    let predicted = predict_records(params, config, &positives)?;
    positives
        .into_iter()
        .zip(predicted)
        .filter(|(_, p)| *p == Label::Ship)
        .map(|(r, _)| {
            let b = boxes
                .iter()
                .find(|b| b.id == r.id)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no box for positive chip {}", r.id)))?;
            Ok((r, b))
        })
        .collect()
}

/// CAM peak hits over `chips`. The map targets `class`, or the model's own
/// prediction when `None`.
pub fn localization(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chips: &[(ChipRecord, ShipBox)],
    method: CamMethod,
    class: Option<Label>,
) -> Result<Localization> {
    let margin = cam::cell_footprint(config)?;
    let hits: Vec<bool> = chips
        .par_iter()
        .map(|(r, b)| {
            let chip = r.tensor(config.input_size)?;
            let target = match class {
                Some(l) => l.index(),
                None => cam::predicted_class(params, config, &chip)?,
            };
            let hm = cam::compute(method, params, config, &chip, target)?;
            Ok(cam::peak_in_box(&hm, b, margin))
        })
        .collect::<Result<_>>()?;
    Ok(Localization { hits: hits.iter().filter(|&&h| h).count(), total: hits.len() })
}

/// Localization of each model over the SAR test positives that `reference`
/// classifies correctly.
pub fn test_localization(
    cfg: &RunConfig,
    out: &Path,
    reference: &Path,
    models: &[PathBuf],
    class: Option<Label>,
) -> Result<Vec<Localization>> {
    let reference = Checkpoint::load(reference)?;
    let (_, test) = sar_split(cfg, out)?;
    let boxes = load_boxes(&cfg.data_root(out).join("sar"))?;
    let chips = detected_positives(&reference.params, &reference.config, &test, &boxes)?;
    models
        .iter()
        .map(|m| {
            let ckpt = Checkpoint::load(m)?;
            localization(&ckpt.params, &ckpt.config, &chips, cfg.cam_method, class)
        })
        .collect()
}

/// synth, train, finetune, eval, report and CAM panels in one go.
pub fn cmd_run(
    cfg: &RunConfig,
    out: &Path,
    force: bool,
    mut progress: impl FnMut(&str, &EpochRecord),
) -> Result<Vec<EvalReport>> {
    cmd_synth(cfg, out, force)?;
    cmd_train(cfg, out, |r| progress("eo", r))?;
    cmd_finetune(cfg, out, None, |r| progress("tl", r))?;
    cmd_eval(cfg, out, None)?;
    let reports = cmd_report(out)?;
    let panels = (out.join(EO_CHECKPOINT), out.join(TL_CHECKPOINT));
    cmd_cam(cfg, out, &CamRequest { panels: Some(panels), ..CamRequest::default() })?;
    Ok(reports)
}
