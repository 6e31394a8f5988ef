//! End-to-end staging: synth → patch → cluster → balance → train → eval.
//!
//! Each stage reads its inputs from disk and writes its outputs atomically.
//! A stage is skipped when all of its outputs exist and no upstream stage
//! ran in the same invocation, so reruns are no-ops and deleting one
//! artifact reruns only the stages from that point on.
//!
//! Layout under `work_dir` (names configurable):
//!
//! ```text
//! slides/<CLASS>/<slide_id>.ppm, slides/truth.csv     synth
//! patches/<patch_id>.ppm, manifest.csv                patch
//! clustered.csv, cluster_summary.csv                  cluster
//! balanced/{train,same,shifted}/manifest.csv + .ppm   balance
//! model.ckpt, train_log.csv                           train
//! reports/{same,shifted}/…, summary.json              eval
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{build_model, ClassifierSpec, EpochStats, TrainConfig};
use crate::color::{balance_sweep_shaped, ColorShaping, TEST_PERCENTAGES, TRAIN_PERCENTAGES};
use crate::dataio::checkpoint::{load_classifier, save_classifier};
use crate::dataio::config::{parse_list, KeyValues};
use crate::dataio::manifest::Manifest;
use crate::dataio::ppm::{read_image, write_image};
use crate::dataio::synth::{generate_synthetic, write_corpus, SyntheticSpec};
use crate::dataio::{read_bytes, write_atomic, write_dir_atomic};
use crate::error::{Error, Result};
use crate::filter::{cluster_summary, filter_patches, AutoencoderConfig};
use crate::image::RgbImage;
use crate::metrics::EvalReport;
use crate::patching::{assign_split, extract_patches, ClassLabel, Cluster, PatchRecord, Split};

/// Every key accepted in a pipeline config file.
pub const CONFIG_KEYS: &[&str] = &[
    "work_dir",
    "seed",
    "slides_per_class",
    "grid_cols",
    "grid_rows",
    "patch_size",
    "tissue_fraction",
    "noise",
    "test_fraction",
    "ae_input_size",
    "ae_embedding_dim",
    "ae_epochs",
    "ae_batch_size",
    "ae_learning_rate",
    "pools",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "train_percentages",
    "test_percentages",
    "balance_gamma",
    "balance_matrix",
    "slides_dir",
    "patches_dir",
    "manifest",
    "clustered_manifest",
    "cluster_summary",
    "balanced_dir",
    "model",
    "train_log",
    "report_dir",
    "summary",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub slides: PathBuf,
    pub patches: PathBuf,
    pub manifest: PathBuf,
    pub clustered: PathBuf,
    pub cluster_summary: PathBuf,
    pub balanced: PathBuf,
    pub model: PathBuf,
    pub train_log: PathBuf,
    pub reports: PathBuf,
    pub summary: PathBuf,
}

impl Paths {
    pub fn under(work_dir: &Path) -> Self {
        Paths {
            slides: work_dir.join("slides"),
            patches: work_dir.join("patches"),
            manifest: work_dir.join("manifest.csv"),
            clustered: work_dir.join("clustered.csv"),
            cluster_summary: work_dir.join("cluster_summary.csv"),
            balanced: work_dir.join("balanced"),
            model: work_dir.join("model.ckpt"),
            train_log: work_dir.join("train_log.csv"),
            reports: work_dir.join("reports"),
            summary: work_dir.join("summary.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub test_fraction: f64,
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierSpec,
    pub train: TrainConfig,
    pub train_percentages: Vec<f64>,
    pub test_percentages: Vec<f64>,
    pub shaping: ColorShaping,
    pub paths: Paths,
}

impl PipelineConfig {
    /// Desk-scale defaults rooted at `work_dir`.
    pub fn desk(work_dir: &Path, seed: u64) -> Self {
        let mut cfg = PipelineConfig {
            seed,
            synth: SyntheticSpec::default(),
            test_fraction: 0.34,
            autoencoder: AutoencoderConfig::default(),
            classifier: ClassifierSpec::desk(),
            train: TrainConfig {
                epochs: 8,
                ..TrainConfig::default()
            },
            train_percentages: TRAIN_PERCENTAGES.to_vec(),
            test_percentages: TEST_PERCENTAGES.to_vec(),
            shaping: ColorShaping::default(),
            paths: Paths::under(work_dir),
        };
        cfg.set_seed(seed);
        cfg
    }

    /// Threads `seed` through every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.autoencoder.seed = seed.wrapping_add(2);
        self.train.seed = seed.wrapping_add(4);
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    /// Relative paths resolve against `base` (normally the config file's
    /// directory); `work_dir` defaults to `base`.
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self> {
        if let Some(bad) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Error::invalid(format!("unknown config key `{bad}`")));
        }
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let work_dir = kv
            .get_str("work_dir")
            .map(resolve)
            .unwrap_or_else(|| base.to_path_buf());
        let mut cfg = PipelineConfig::desk(&work_dir, kv.get_or("seed", 0u64)?);

        let s = &mut cfg.synth;
        s.slides_per_class = kv.get_or("slides_per_class", s.slides_per_class)?;
        s.grid = (
            kv.get_or("grid_cols", s.grid.0)?,
            kv.get_or("grid_rows", s.grid.1)?,
        );
        s.patch_size = kv.get_or("patch_size", s.patch_size)?;
        s.tissue_fraction = kv.get_or("tissue_fraction", s.tissue_fraction)?;
        s.noise = kv.get_or("noise", s.noise)?;
        cfg.test_fraction = kv.get_or("test_fraction", cfg.test_fraction)?;

        let ae = &mut cfg.autoencoder;
        ae.input_size = kv.get_or("ae_input_size", ae.input_size)?;
        ae.embedding_dim = kv.get_or("ae_embedding_dim", ae.embedding_dim)?;
        ae.epochs = kv.get_or("ae_epochs", ae.epochs)?;
        ae.batch_size = kv.get_or("ae_batch_size", ae.batch_size)?;
        ae.learning_rate = kv.get_or("ae_learning_rate", ae.learning_rate)?;

        let (spec, train) = train_settings(kv, cfg.classifier.clone(), cfg.train.clone())?;
        cfg.classifier = spec;
        cfg.classifier.patch_size = cfg.synth.patch_size;
        cfg.train = train;
        if let Some(v) = kv.get_list("train_percentages")? {
            cfg.train_percentages = v;
        }
        if let Some(v) = kv.get_list("test_percentages")? {
            cfg.test_percentages = v;
        }
        cfg.shaping.gamma = kv.get_or("balance_gamma", cfg.shaping.gamma)?;
        if let Some(v) = kv.get_list("balance_matrix")? {
            cfg.shaping.color_matrix = ColorShaping::matrix_from_slice(&v)?;
        }
        if !(cfg.shaping.gamma > 0.0 && cfg.shaping.gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "balance_gamma must be positive, got {}",
                cfg.shaping.gamma
            )));
        }

        let p = &mut cfg.paths;
        for (key, slot) in [
            ("slides_dir", &mut p.slides),
            ("patches_dir", &mut p.patches),
            ("manifest", &mut p.manifest),
            ("clustered_manifest", &mut p.clustered),
            ("cluster_summary", &mut p.cluster_summary),
            ("balanced_dir", &mut p.balanced),
            ("model", &mut p.model),
            ("train_log", &mut p.train_log),
            ("report_dir", &mut p.reports),
            ("summary", &mut p.summary),
        ] {
            if let Some(v) = kv.get_str(key) {
                *slot = if Path::new(v).is_absolute() {
                    PathBuf::from(v)
                } else {
                    work_dir.join(v)
                };
            }
        }
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_key_values(&kv, base)
    }
}

/// Keys read by [`train_settings`].
pub const TRAIN_KEYS: &[&str] = &[
    "patch_size",
    "pools",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
];

/// Classifier shape and optimizer settings from [`TRAIN_KEYS`], falling back
/// to the given defaults.
pub fn train_settings(
    kv: &KeyValues,
    mut spec: ClassifierSpec,
    mut train: TrainConfig,
) -> Result<(ClassifierSpec, TrainConfig)> {
    spec.patch_size = kv.get_or("patch_size", spec.patch_size)?;
    if let Some(p) = kv.get_str("pools") {
        let v = parse_list(p)?;
        if v.len() != 3 || v.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
            return Err(Error::invalid(format!(
                "pools must be three positive integers, got `{p}`"
            )));
        }
        spec.pools = [v[0] as usize, v[1] as usize, v[2] as usize];
    }
    train.epochs = kv.get_or("epochs", train.epochs)?;
    train.batch_size = kv.get_or("batch_size", train.batch_size)?;
    train.learning_rate = kv.get_or("learning_rate", train.learning_rate)?;
    train.beta1 = kv.get_or("beta1", train.beta1)?;
    train.beta2 = kv.get_or("beta2", train.beta2)?;
    train.epsilon = kv.get_or("epsilon", train.epsilon)?;
    train.validate()?;
    Ok((spec, train))
}

fn stage_err(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage,
        source: Box::new(e),
    }
}

pub fn run_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<()> {
    let slides = generate_synthetic(spec)?;
    write_corpus(&slides, out_dir, spec.patch_size)
}

fn slide_files(slides_dir: &Path) -> Result<Vec<(ClassLabel, String, PathBuf)>> {
    let mut out = Vec::new();
    for class in ClassLabel::ALL {
        let dir = slides_dir.join(class.as_str());
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "png")))
            .collect();
        files.sort();
        for f in files {
            let id = f
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::invalid(format!("bad slide file name {}", f.display())))?
                .to_string();
            out.push((class, id, f));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no slides under {} (expected <CLASS>/<slide>.ppm)",
            slides_dir.display()
        )));
    }
    Ok(out)
}

/// Tiles every slide under `slides_dir/<CLASS>/`, writes the patches and a
/// manifest with a slide-level train/test split.
pub fn run_patch(
    slides_dir: &Path,
    patch_size: usize,
    test_fraction: f64,
    seed: u64,
    patches_dir: &Path,
    manifest_path: &Path,
) -> Result<Manifest> {
    let mut records = Vec::new();
    write_dir_atomic(patches_dir, |tmp| {
        for (class, id, path) in slide_files(slides_dir)? {
            let slide = read_image(&path)?;
            for (rec, img) in extract_patches(&slide, patch_size, &id, class)? {
                write_image(&Manifest::patch_path(tmp, &rec), &img)?;
                records.push(rec);
            }
        }
        Ok(())
    })?;
    assign_split(&mut records, test_fraction, seed)?;
    let manifest = Manifest::new(records)?;
    manifest.write(manifest_path)?;
    Ok(manifest)
}

fn load_images(records: &[PatchRecord], root: &Path) -> Result<Vec<RgbImage>> {
    records
        .par_iter()
        .map(|r| read_image(&Manifest::patch_path(root, r)))
        .collect()
}

/// Labels every patch useful or not useful and writes the updated manifest
/// plus a per-class count table.
pub fn run_cluster(
    manifest_path: &Path,
    patches_dir: &Path,
    config: &AutoencoderConfig,
    out_manifest: &Path,
    summary_path: &Path,
) -> Result<Manifest> {
    let mut manifest = Manifest::read(manifest_path)?;
    let images = load_images(&manifest.records, patches_dir)?;
    let outcome = filter_patches(&images, config)?;
    for (r, c) in manifest.records.iter_mut().zip(outcome.clusters) {
        r.cluster = c;
    }
    manifest.write(out_manifest)?;
    write_atomic(summary_path, cluster_summary(&manifest.records).as_bytes())?;
    Ok(manifest)
}

pub const BALANCE_SETS: [&str; 3] = ["train", "same", "shifted"];

fn balanced_record(r: &PatchRecord, k: usize) -> PatchRecord {
    PatchRecord {
        patch_id: format!("{}_b{k}", r.patch_id),
        ..r.clone()
    }
}

/// Expands useful patches under colour-balance sweeps:
///
/// * `train/`: training split under `train_percentages`
/// * `same/`: test split under `train_percentages`
/// * `shifted/`: test split under `test_percentages`
///
/// Each set holds its own manifest and images; variant `k` of a patch gets
/// id `<patch_id>_b<k>`.
pub fn run_balance(
    manifest_path: &Path,
    patches_dir: &Path,
    train_percentages: &[f64],
    test_percentages: &[f64],
    shaping: &ColorShaping,
    out_dir: &Path,
) -> Result<()> {
    let manifest = Manifest::read(manifest_path)?;
    let useful: Vec<&PatchRecord> = manifest
        .records
        .iter()
        .filter(|r| r.cluster != Cluster::NotUseful)
        .collect();
    if useful.is_empty() {
        return Err(Error::invalid("no useful patches to balance"));
    }
    write_dir_atomic(out_dir, |tmp| {
        for set in BALANCE_SETS {
            let (split, pcts) = match set {
                "train" => (Split::Train, train_percentages),
                "same" => (Split::Test, train_percentages),
                _ => (Split::Test, test_percentages),
            };
            let members: Vec<&PatchRecord> = useful
                .iter()
                .copied()
                .filter(|r| r.split == split)
                .collect();
            let expanded: Vec<Vec<RgbImage>> = members
                .par_iter()
                .map(|r| {
                    let img = read_image(&Manifest::patch_path(patches_dir, r))?;
                    balance_sweep_shaped(&img, pcts, shaping)
                })
                .collect::<Result<_>>()?;
            let dir = tmp.join(set);
            let mut records = Vec::new();
            for (r, variants) in members.iter().zip(expanded) {
                for (k, img) in variants.iter().enumerate() {
                    let rec = balanced_record(r, k);
                    write_image(&Manifest::patch_path(&dir, &rec), img)?;
                    records.push(rec);
                }
            }
            Manifest::new(records)?.write(&dir.join("manifest.csv"))?;
        }
        Ok(())
    })
}

fn select(manifest: &Manifest, split: Split) -> Vec<PatchRecord> {
    manifest
        .records
        .iter()
        .filter(|r| r.split == split && r.cluster != Cluster::NotUseful)
        .cloned()
        .collect()
}

/// Trains a fresh classifier on the manifest's training-split patches
/// (not-useful ones excluded) and saves it with its optimizer state.
pub fn run_train(
    manifest_path: &Path,
    patches_dir: &Path,
    spec: &ClassifierSpec,
    config: &TrainConfig,
    init_seed: u64,
    model_path: &Path,
    log_path: &Path,
) -> Result<Vec<EpochStats>> {
    let manifest = Manifest::read(manifest_path)?;
    let records = select(&manifest, Split::Train);
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{} has no training patches",
            manifest_path.display()
        )));
    }
    let images = load_images(&records, patches_dir)?;
    let labels: Vec<usize> = records.iter().map(|r| r.class_label.index()).collect();
    let mut model = build_model::<f32>(spec, init_seed)?;
    let history = model.train(&images, &labels, config)?;
    save_classifier(&model, model_path)?;
    let mut log = String::from("epoch,loss,accuracy\n");
    for h in &history {
        let _ = writeln!(log, "{},{:.6},{:.6}", h.epoch, h.loss, h.accuracy);
    }
    write_atomic(log_path, log.as_bytes())?;
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBrief {
    pub samples: u64,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub f1: BTreeMap<String, f64>,
    pub auc: BTreeMap<String, f64>,
    pub auc_micro: f64,
    pub auc_macro: f64,
}

impl From<&EvalReport> for EvalBrief {
    fn from(r: &EvalReport) -> Self {
        EvalBrief {
            samples: r.confusion.total(),
            accuracy: r.summary.accuracy,
            micro_f1: r.summary.micro.f1,
            macro_f1: r.summary.macro_avg.f1,
            f1: r
                .class_names
                .iter()
                .cloned()
                .zip(r.summary.per_class.iter().map(|s| s.f1))
                .collect(),
            auc: r
                .class_names
                .iter()
                .cloned()
                .zip(r.roc.iter().map(|c| c.auc))
                .collect(),
            auc_micro: r.roc_micro.auc,
            auc_macro: r.roc_macro.auc,
        }
    }
}

/// Evaluates the model on the manifest's test-split patches and writes
/// `report.txt`, `roc.csv` and `metrics.json` into `out_dir`.
pub fn run_eval(
    model_path: &Path,
    manifest_path: &Path,
    patches_dir: &Path,
    out_dir: &Path,
) -> Result<EvalReport> {
    let model = load_classifier(model_path)?;
    let manifest = Manifest::read(manifest_path)?;
    let records = select(&manifest, Split::Test);
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{} has no test patches",
            manifest_path.display()
        )));
    }
    let images = load_images(&records, patches_dir)?;
    let probs = model.predict(&images)?;
    let k = model.classes();
    let scores: Vec<Vec<f64>> = probs
        .data()
        .chunks_exact(k)
        .map(|row| row.iter().map(|&p| p as f64).collect())
        .collect();
    let labels: Vec<usize> = records.iter().map(|r| r.class_label.index()).collect();
    let names: Vec<&str> = ClassLabel::ALL.iter().map(|c| c.as_str()).collect();
    let report = EvalReport::build(&labels, &scores, &names[..k])?;
    let brief = EvalBrief::from(&report);
    write_dir_atomic(out_dir, |tmp| {
        write_atomic(&tmp.join("report.txt"), report.render().as_bytes())?;
        write_atomic(&tmp.join("roc.csv"), report.roc_csv().as_bytes())?;
        write_atomic(&tmp.join("metrics.json"), &to_json(&brief)?)
    })?;
    Ok(report)
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(v).map_err(|e| Error::invalid(format!("json encode: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub patches: usize,
    pub useful: usize,
    pub not_useful: usize,
    pub train_images: usize,
    pub train_percentages: Vec<f64>,
    pub test_percentages: Vec<f64>,
    pub same: EvalBrief,
    pub shifted: EvalBrief,
    /// `same.macro_f1 − shifted.macro_f1`
    pub macro_f1_drop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageRun {
    pub stage: &'static str,
    pub ran: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub stages: Vec<StageRun>,
    pub summary: PipelineSummary,
}

impl PipelineRun {
    pub fn ran(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s.stage == stage && s.ran)
    }
}

struct Stager {
    upstream_ran: bool,
    log: Vec<StageRun>,
}

impl Stager {
    fn stage(
        &mut self,
        name: &'static str,
        outputs: &[&Path],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let run = self.upstream_ran || outputs.iter().any(|p| !p.exists());
        if run {
            body().map_err(stage_err(name))?;
            self.upstream_ran = true;
        }
        self.log.push(StageRun {
            stage: name,
            ran: run,
        });
        Ok(())
    }
}

/// Runs every stage that is out of date. Errors carry the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let p = &cfg.paths;
    let same_dir = p.reports.join("same");
    let shifted_dir = p.reports.join("shifted");
    let train_set = p.balanced.join("train");
    let mut st = Stager {
        upstream_ran: false,
        log: Vec::new(),
    };

    st.stage("synth", &[&p.slides], || run_synth(&cfg.synth, &p.slides))?;
    st.stage("patch", &[&p.patches, &p.manifest], || {
        run_patch(
            &p.slides,
            cfg.synth.patch_size,
            cfg.test_fraction,
            cfg.split_seed(),
            &p.patches,
            &p.manifest,
        )
        .map(drop)
    })?;
    st.stage("cluster", &[&p.clustered, &p.cluster_summary], || {
        run_cluster(
            &p.manifest,
            &p.patches,
            &cfg.autoencoder,
            &p.clustered,
            &p.cluster_summary,
        )
        .map(drop)
    })?;
    st.stage("balance", &[&p.balanced], || {
        run_balance(
            &p.clustered,
            &p.patches,
            &cfg.train_percentages,
            &cfg.test_percentages,
            &cfg.shaping,
            &p.balanced,
        )
    })?;
    st.stage("train", &[&p.model, &p.train_log], || {
        run_train(
            &train_set.join("manifest.csv"),
            &train_set,
            &cfg.classifier,
            &cfg.train,
            cfg.init_seed(),
            &p.model,
            &p.train_log,
        )
        .map(drop)
    })?;
    st.stage("eval", &[&same_dir, &shifted_dir, &p.summary], || {
        let mut briefs = Vec::new();
        for (set, dir) in [("same", &same_dir), ("shifted", &shifted_dir)] {
            let set_dir = p.balanced.join(set);
            let report = run_eval(&p.model, &set_dir.join("manifest.csv"), &set_dir, dir)?;
            briefs.push(EvalBrief::from(&report));
        }
        let clustered = Manifest::read(&p.clustered)?;
        let useful = clustered
            .records
            .iter()
            .filter(|r| r.cluster == Cluster::Useful)
            .count();
        let train_images = Manifest::read(&train_set.join("manifest.csv"))?
            .records
            .len();
        let shifted = briefs.pop().expect("two sets");
        let same = briefs.pop().expect("two sets");
        let summary = PipelineSummary {
            seed: cfg.seed,
            patches: clustered.records.len(),
            useful,
            not_useful: clustered.records.len() - useful,
            train_images,
            train_percentages: cfg.train_percentages.clone(),
            test_percentages: cfg.test_percentages.clone(),
            macro_f1_drop: same.macro_f1 - shifted.macro_f1,
            same,
            shifted,
        };
        write_atomic(&p.summary, &to_json(&summary)?)
    })?;

    let summary: PipelineSummary = serde_json::from_slice(&read_bytes(&p.summary)?)
        .map_err(|e| Error::invalid(format!("{}: {e}", p.summary.display())))?;
    Ok(PipelineRun {
        stages: st.log,
        summary,
    })
}
