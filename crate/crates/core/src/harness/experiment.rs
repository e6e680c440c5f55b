//! Experiment orchestration: load data, train one learner per site for each
//! method, decode the test split at checkpoint epochs, and assemble a report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{ecoc_l1_decode, soft_decode, SiteDistributions};
use crate::error::{Error, Result};
use crate::harness::data::{ingest_csv, label_permutation, stratified_split, synth_gaussian, Dataset};
use crate::harness::text::{expand_categorical, ingest_text_corpus, DashPolicy};
use crate::learners::channel::{ChannelConfig, NoisyChannel};
use crate::learners::softmax::{SoftmaxModel, SoftmaxTrainer, TrainConfig};
use crate::mapping::{LabelMapping, MappingSpec};
use crate::matrix::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Synth {
        n_classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        /// Separate test file; without it the training file is split.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_classes: Option<usize>,
    },
    Text {
        path: PathBuf,
        window: usize,
        #[serde(default)]
        dash_policy: DashPolicy,
        /// Code used to expand each context word; one-hot over the vocabulary
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_mapping: Option<MappingSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum MethodSpec {
    #[serde(rename = "onehot")]
    OneHot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    #[serde(rename = "ecoc-l1")]
    EcocL1 {
        bits: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    #[serde(rename = "lm")]
    Lm {
        mapping: MappingSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl MethodSpec {
    fn tag(&self) -> &'static str {
        match self {
            MethodSpec::OneHot { .. } => "onehot",
            MethodSpec::EcocL1 { .. } => "ecoc-l1",
            MethodSpec::Lm { .. } => "lm",
        }
    }

    fn display_name(&self, lm: &LabelMapping) -> String {
        let explicit = match self {
            MethodSpec::OneHot { name } | MethodSpec::EcocL1 { name, .. } | MethodSpec::Lm { name, .. } => name,
        };
        explicit.clone().unwrap_or_else(|| match self {
            MethodSpec::OneHot { .. } => "onehot".into(),
            MethodSpec::EcocL1 { bits, .. } => format!("ecoc-l1-{bits}"),
            MethodSpec::Lm { .. } => format!("lm-{}-n{}", lm.kind(), lm.n_sites()),
        })
    }

    fn mapping(&self, n_classes: usize) -> Result<LabelMapping> {
        match self {
            MethodSpec::OneHot { .. } => LabelMapping::onehot(n_classes),
            MethodSpec::EcocL1 { bits, .. } => LabelMapping::ecoc(n_classes, *bits),
            MethodSpec::Lm { mapping, .. } => {
                if mapping.n_classes != n_classes {
                    return Err(Error::invalid(format!(
                        "mapping is for N={} but the data has N={n_classes}",
                        mapping.n_classes
                    )));
                }
                mapping.build()
            }
        }
    }

    fn decoder(&self) -> Decoder {
        match self {
            MethodSpec::EcocL1 { .. } => Decoder::L1,
            _ => Decoder::Soft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    Soft,
    L1,
}

/// Replace trained learners by the noisy channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelMode {
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Master seed: split, per-site training seeds and channel noise.
    pub seed: u64,
    pub data: DataSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
    pub methods: Vec<MethodSpec>,
    /// Epochs at which test accuracy is recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelMode>,
    /// Relabel classes by a seeded permutation before mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_permutation_seed: Option<u64>,
    /// Adds wall-clock seconds to the report, which then differs run to run.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test_fraction must lie in [0, 1)"));
        }
        if let Some(ch) = &self.channel {
            ChannelConfig::new(ch.epsilon, 0)?;
        } else {
            self.train.validate()?;
            self.resolved_checkpoints()?;
        }
        Ok(())
    }

    /// Sorted, deduplicated checkpoint epochs, always ending at the last
    /// epoch. The default is a quarter, a half, three quarters and all of the
    /// budget.
    pub fn resolved_checkpoints(&self) -> Result<Vec<usize>> {
        let epochs = self.train.epochs;
        let mut cps = match &self.checkpoints {
            Some(c) => {
                if let Some(&bad) = c.iter().find(|&&e| e == 0 || e > epochs) {
                    return Err(Error::invalid(format!("checkpoint {bad} outside 1..={epochs}")));
                }
                c.clone()
            }
            None => (1..=4).map(|q| (epochs * q).div_ceil(4).max(1)).collect(),
        };
        cps.push(epochs);
        cps.sort_unstable();
        cps.dedup();
        Ok(cps)
    }

    fn check_paths(&self, base: &Path) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.data {
            DataSource::Csv { path, test_path, .. } => std::iter::once(path).chain(test_path).collect(),
            DataSource::Text { path, .. } => vec![path],
            DataSource::Synth { .. } => vec![],
        };
        for p in paths {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::invalid(format!("data file {} does not exist", full.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochAccuracy {
    pub epoch: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub method: String,
    pub mapping: MappingSpec,
    pub decoder: Decoder,
    pub site_sizes: Vec<usize>,
    pub parameter_count: usize,
    pub site_seeds: Vec<u64>,
    /// Epoch 0 stands for the untrained channel stand-in.
    pub accuracy: Vec<EpochAccuracy>,
    pub final_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_classes: usize,
    pub dim: usize,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub checkpoints: Vec<usize>,
    pub methods: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn name_key(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for one site learner of the method called `method`. Depends on the
/// name rather than list position, so adding methods leaves the others alone.
pub fn site_seed(master: u64, train_seed: u64, method: &str, site: u64) -> u64 {
    let base = splitmix64(splitmix64(master) ^ train_seed);
    splitmix64(splitmix64(base ^ name_key(method)) ^ site)
}

/// Parameters of one learner per site: `sum_i (N_i d + N_i)` without a
/// hidden layer, plus `h d + h` and the narrower head per site with one.
pub fn parameter_count(site_sizes: &[usize], dim: usize, hidden: usize) -> usize {
    site_sizes
        .iter()
        .map(|&c| {
            if hidden == 0 {
                c * dim + c
            } else {
                hidden * dim + hidden + c * hidden + c
            }
        })
        .sum()
}

/// Trains the learner for one site, snapshotting at each checkpoint.
pub fn train_site(
    features: &Matrix,
    site_labels: &[usize],
    classes: usize,
    cfg: &TrainConfig,
    checkpoints: &[usize],
) -> Result<Vec<SoftmaxModel>> {
    let mut trainer = SoftmaxTrainer::new(features, site_labels, classes, cfg)?;
    let mut snaps = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        while trainer.epochs_done() < cp {
            trainer.run_epoch();
        }
        snaps.push(trainer.model().clone());
    }
    Ok(snaps)
}

/// Per-site training labels `f_i(y)`.
pub fn site_labels(lm: &LabelMapping, labels: &[usize], site: usize) -> Vec<usize> {
    labels.iter().map(|&y| lm.site_value(site, y)).collect()
}

/// Trains every site of `lm` in parallel; errors carry the site index.
pub fn train_sites(
    lm: &LabelMapping,
    features: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    seeds: &[u64],
    checkpoints: &[usize],
) -> Result<Vec<Vec<SoftmaxModel>>> {
    if let Some(&y) = labels.iter().find(|&&y| y >= lm.n_classes()) {
        return Err(Error::invalid(format!("label {y} out of range for N={}", lm.n_classes())));
    }
    (0..lm.n_sites())
        .into_par_iter()
        .map(|i| {
            let cfg = TrainConfig { seed: seeds[i], ..cfg.clone() };
            train_site(features, &site_labels(lm, labels, i), lm.site_sizes()[i], &cfg, checkpoints)
                .map_err(|e| Error::Site { site: i, source: Box::new(e) })
        })
        .collect()
}

/// Decodes one sample's site distributions.
pub fn decode_distributions(lm: &LabelMapping, decoder: Decoder, d: &SiteDistributions) -> Result<usize> {
    match decoder {
        Decoder::Soft => Ok(soft_decode(lm, d)?.label),
        Decoder::L1 => {
            let bits: Vec<f64> = d.blocks().iter().map(|b| b[1]).collect();
            ecoc_l1_decode(lm, &bits)
        }
    }
}

/// Predicted label for feature row `x` from one model per site.
pub fn predict_label(lm: &LabelMapping, decoder: Decoder, models: &[SoftmaxModel], x: &[f64]) -> Result<usize> {
    let blocks = models.iter().map(|m| m.predict_dist(x)).collect::<Result<Vec<_>>>()?;
    decode_distributions(lm, decoder, &SiteDistributions::new(blocks)?)
}

/// Fraction of rows whose decoded label matches.
pub fn evaluate_models(
    lm: &LabelMapping,
    decoder: Decoder,
    models: &[SoftmaxModel],
    features: &Matrix,
    labels: &[usize],
) -> Result<f64> {
    if models.len() != lm.n_sites() {
        return Err(Error::invalid(format!("{} models for {} sites", models.len(), lm.n_sites())));
    }
    for (i, (m, &size)) in models.iter().zip(lm.site_sizes()).enumerate() {
        if m.classes != size {
            return Err(Error::Site {
                site: i,
                source: Box::new(Error::invalid(format!("model has {} classes, site has {size}", m.classes))),
            });
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid("no evaluation samples"));
    }
    let correct = (0..labels.len())
        .into_par_iter()
        .map(|r| Ok(usize::from(predict_label(lm, decoder, models, features.row(r))? == labels[r])))
        .sum::<Result<usize>>()?;
    Ok(correct as f64 / labels.len() as f64)
}

fn channel_accuracy_on(lm: &LabelMapping, decoder: Decoder, epsilon: f64, seed: u64, labels: &[usize]) -> Result<f64> {
    let mut ch = NoisyChannel::new(ChannelConfig::new(epsilon, seed)?, lm)?;
    let dists = labels.iter().map(|&y| ch.emit(y)).collect::<Result<Vec<_>>>()?;
    let correct = dists
        .par_iter()
        .zip(labels)
        .map(|(d, &y)| Ok(usize::from(decode_distributions(lm, decoder, d)? == y)))
        .sum::<Result<usize>>()?;
    Ok(correct as f64 / labels.len() as f64)
}

struct Prepared {
    train_x: Matrix,
    train_y: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
    n_classes: usize,
}

fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<Prepared> {
    cfg.check_paths(base)?;
    let (mut train, mut test, input_mapping) = match &cfg.data {
        DataSource::Synth { n_classes, dim, per_class, spread, seed } => {
            let ds = synth_gaussian(*n_classes, *dim, *per_class, *spread, *seed)?;
            let (tr, te) = stratified_split(&ds.labels, cfg.test_fraction, cfg.seed)?;
            (ds.subset(&tr), ds.subset(&te), None)
        }
        DataSource::Csv { path, test_path, n_classes } => {
            let first = ingest_csv(&base.join(path), *n_classes)?;
            match test_path {
                Some(tp) => {
                    let second = ingest_csv(&base.join(tp), *n_classes)?;
                    if second.dim() != first.dim() {
                        return Err(Error::invalid("train and test files have different widths"));
                    }
                    let n = first.n_classes.max(second.n_classes);
                    let (mut a, mut b) = (first, second);
                    a.n_classes = n;
                    b.n_classes = n;
                    (a, b, None)
                }
                None => {
                    let (tr, te) = stratified_split(&first.labels, cfg.test_fraction, cfg.seed)?;
                    (first.subset(&tr), first.subset(&te), None)
                }
            }
        }
        DataSource::Text { path, window, dash_policy, input_mapping } => {
            let ds = ingest_text_corpus(&base.join(path), *window, *dash_policy)?;
            let input = match input_mapping {
                Some(spec) => spec.build()?,
                None => LabelMapping::onehot(ds.n_classes)?,
            };
            let (tr, te) = stratified_split(&ds.labels, cfg.test_fraction, cfg.seed)?;
            (ds.subset(&tr), ds.subset(&te), Some(input))
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("train and test splits must both be non-empty"));
    }
    if let Some(seed) = cfg.label_permutation_seed {
        let perm = label_permutation(train.n_classes, seed);
        for ds in [&mut train, &mut test] {
            for y in ds.labels.iter_mut() {
                *y = perm[*y];
            }
        }
    }
    let expand = |ds: &Dataset| -> Result<Matrix> {
        match &input_mapping {
            Some(m) => expand_categorical(ds, m),
            None => Ok(ds.features.clone()),
        }
    };
    Ok(Prepared {
        train_x: expand(&train)?,
        test_x: expand(&test)?,
        train_y: train.labels,
        test_y: test.labels,
        n_classes: train.n_classes,
    })
}

/// Runs every configured method. Relative data paths resolve against `base`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let data = prepare(cfg, base)?;
    let dim = data.train_x.cols();
    let checkpoints = match cfg.channel {
        Some(_) => vec![],
        None => cfg.resolved_checkpoints()?,
    };

    let mappings = cfg
        .methods
        .iter()
        .map(|m| m.mapping(data.n_classes))
        .collect::<Result<Vec<_>>>()?;

    let names: Vec<String> = cfg.methods.iter().zip(&mappings).map(|(m, lm)| m.display_name(lm)).collect();
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::invalid(format!("duplicate method name '{name}'")));
        }
    }

    let mut methods = Vec::with_capacity(cfg.methods.len());
    for ((method, lm), name) in cfg.methods.iter().zip(&mappings).zip(names) {
        let method_start = Instant::now();
        let decoder = method.decoder();
        let (accuracy, seeds, params) = match cfg.channel {
            Some(ch) => {
                let seed = site_seed(cfg.seed, 0, &name, u64::MAX);
                let acc = channel_accuracy_on(lm, decoder, ch.epsilon, seed, &data.test_y)?;
                (
                    vec![EpochAccuracy { epoch: 0, accuracy: acc }],
                    vec![seed],
                    parameter_count(lm.site_sizes(), dim, 0),
                )
            }
            None => {
                let seeds: Vec<u64> = (0..lm.n_sites())
                    .map(|i| site_seed(cfg.seed, cfg.train.seed, &name, i as u64))
                    .collect();
                let snaps = train_sites(lm, &data.train_x, &data.train_y, &cfg.train, &seeds, &checkpoints)?;
                let mut accuracy = Vec::with_capacity(checkpoints.len());
                for (ci, &epoch) in checkpoints.iter().enumerate() {
                    let models: Vec<SoftmaxModel> = snaps.iter().map(|s| s[ci].clone()).collect();
                    let acc = evaluate_models(lm, decoder, &models, &data.test_x, &data.test_y)?;
                    accuracy.push(EpochAccuracy { epoch, accuracy: acc });
                }
                let params = snaps.iter().map(|s| s[0].parameter_count()).sum();
                (accuracy, seeds, params)
            }
        };
        let secs = method_start.elapsed().as_secs_f64();
        eprintln!("{name}: final accuracy {:.4} in {secs:.2}s", accuracy.last().map_or(0.0, |a| a.accuracy));
        methods.push(MethodReport {
            name,
            method: method.tag().to_string(),
            mapping: lm.spec(),
            decoder,
            site_sizes: lm.site_sizes().to_vec(),
            parameter_count: params,
            site_seeds: seeds,
            final_accuracy: accuracy.last().map_or(0.0, |a| a.accuracy),
            accuracy,
            wall_clock_seconds: cfg.record_timing.then_some(secs),
        });
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        dataset: DatasetSummary {
            n_classes: data.n_classes,
            dim,
            train_size: data.train_y.len(),
            test_size: data.test_y.len(),
        },
        checkpoints,
        methods,
        wall_clock_seconds: cfg.record_timing.then(|| started.elapsed().as_secs_f64()),
    })
}
