//! Experiment configuration: TOML file, `key=value` overrides, validation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use fens::attacks::AttackConfig;
use fens::filters::FilterSpec;
use fens::nn::{LayerSpec, TrainConfig};
use fens::sensitivity::NoiseConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default CIFAR-10 directory.
pub const DATA_DIR_ENV: &str = "FENS_DATA_DIR";

/// A configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {msg}")]
pub struct ConfigError {
    pub path: String,
    pub msg: String,
}

fn bad(path: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// CIFAR-10 directory; falls back to `$FENS_DATA_DIR`.
    pub dir: Option<PathBuf>,
    /// Synthetic training images per class.
    pub per_class: usize,
    /// Synthetic test images per class.
    pub test_per_class: usize,
    /// Synthetic image side.
    pub size: usize,
    pub seed: u64,
    /// CIFAR-10 training subset size, 0 for all.
    pub train_size: usize,
    /// CIFAR-10 test subset size, 0 for all.
    pub test_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth,
            dir: None,
            per_class: 100,
            test_per_class: 50,
            size: 32,
            seed: 0,
            train_size: 0,
            test_size: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFilter {
    pub name: String,
    pub filter: FilterSpec,
    /// Training schedule for this model only; the top-level `train` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

impl NamedFilter {
    pub fn new(name: &str, filter: FilterSpec) -> Self {
        Self { name: name.into(), filter, train: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianConfig {
    /// Number of noise-trained identity models (`gauss0`, `gauss1`, ...).
    pub count: usize,
    pub sigma: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self { count: 3, sigma: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    /// Train the `adv` model with PGD examples.
    pub enabled: bool,
    /// Radius in 1/255 units.
    pub epsilon: f64,
    pub steps: usize,
    /// Step size in 1/255 units.
    pub step: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self { enabled: false, epsilon: 8.0, steps: 4, step: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Attack radii in 1/255 units.
    pub epsilons: Vec<f64>,
    /// Test images used by attack, transfer and ensemble evaluation.
    pub images: usize,
    /// Model whose adversarial examples are transferred.
    pub transfer_source: String,
    /// Models scored by `attack` and `transfer`; empty means every filter model.
    pub models: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![2.0, 5.0, 8.0, 10.0, 15.0, 20.0],
            images: 200,
            transfer_source: "identity".into(),
            models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateConfig {
    /// Size of the filter subset to select.
    pub select: usize,
    pub must_include: Vec<String>,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        Self { select: 3, must_include: vec!["identity".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub ensemble: String,
    pub images: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { ensemble: "min_corr".into(), images: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub name: String,
    /// Model names: filter names, `gaussK` or `adv`.
    pub members: Vec<String>,
}

impl EnsembleSpec {
    pub fn new(name: &str, members: &[&str]) -> Self {
        Self { name: name.into(), members: members.iter().map(|m| m.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for network initialisation; model `i` uses `seed + i`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tag: String,
    pub dataset: DatasetConfig,
    pub filters: Vec<NamedFilter>,
    /// Layer list shared by every model; the desk CNN when absent.
    pub architecture: Option<Vec<LayerSpec>>,
    pub train: TrainConfig,
    pub gaussian: GaussianConfig,
    pub adversarial: AdversarialConfig,
    pub attack: AttackConfig,
    pub noise: NoiseConfig,
    pub eval: EvalConfig,
    pub correlate: CorrelateConfig,
    pub certify: CertifyConfig,
    pub ensembles: Vec<EnsembleSpec>,
}

pub fn default_filters() -> Vec<NamedFilter> {
    vec![
        NamedFilter::new("identity", FilterSpec::Identity),
        NamedFilter::new("discretize", FilterSpec::Discretize),
        NamedFilter::new("downsize", FilterSpec::Downsize { height: 16, width: 16 }),
        NamedFilter::new("grayscale", FilterSpec::Grayscale),
        NamedFilter::new("octree16", FilterSpec::OctreeQuantize { max_colors: 16, depth: 7 }),
        NamedFilter::new("lowpass", FilterSpec::LowPass { sigma: 8.0 }),
        // High-pass output is small and half zero after clamping; the shared
        // schedule's 0.1 rate diverges on it, so it gets a gentler, longer one.
        NamedFilter {
            train: Some(TrainConfig { learning_rates: vec![0.05, 0.01], epochs_per_rate: 12, ..TrainConfig::default() }),
            ..NamedFilter::new("highpass", FilterSpec::HighPass { sigma: 8.0 })
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            tag: "run".into(),
            dataset: DatasetConfig::default(),
            filters: default_filters(),
            architecture: None,
            train: TrainConfig::default(),
            gaussian: GaussianConfig::default(),
            adversarial: AdversarialConfig::default(),
            attack: AttackConfig::default(),
            noise: NoiseConfig::default(),
            eval: EvalConfig::default(),
            correlate: CorrelateConfig::default(),
            certify: CertifyConfig::default(),
            ensembles: vec![
                EnsembleSpec::new("min_corr", &["discretize", "lowpass", "octree16"]),
                EnsembleSpec::new("max_corr", &["discretize", "highpass", "grayscale"]),
                EnsembleSpec::new("gaussian", &["gauss0", "gauss1", "gauss2"]),
            ],
        }
    }
}

impl ExperimentConfig {
    /// `[channels, height, width]` of dataset images.
    pub fn image_shape(&self) -> [usize; 3] {
        match self.dataset.source {
            DataSource::Synth => [3, self.dataset.size, self.dataset.size],
            DataSource::Cifar10 => [3, 32, 32],
        }
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn gaussian_names(&self) -> Vec<String> {
        (0..self.gaussian.count).map(|k| format!("gauss{k}")).collect()
    }

    /// Every model `train` produces, with the filter in front of it.
    pub fn model_filters(&self) -> Vec<(String, FilterSpec)> {
        let mut out: Vec<(String, FilterSpec)> = self.filters.iter().map(|f| (f.name.clone(), f.filter)).collect();
        out.extend(self.gaussian_names().into_iter().map(|n| (n, FilterSpec::Identity)));
        if self.adversarial.enabled {
            out.push(("adv".into(), FilterSpec::Identity));
        }
        out
    }

    pub fn filter_of(&self, model: &str) -> Option<FilterSpec> {
        self.model_filters().into_iter().find(|(n, _)| n == model).map(|(_, f)| f)
    }

    /// Models evaluated by `attack` and `transfer`.
    pub fn eval_models(&self) -> Vec<String> {
        if self.eval.models.is_empty() {
            self.filters.iter().map(|f| f.name.clone()).collect()
        } else {
            self.eval.models.clone()
        }
    }

    pub fn architecture(&self, num_classes: usize) -> Vec<LayerSpec> {
        self.architecture.clone().unwrap_or_else(|| fens::nn::desk_architecture(num_classes))
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.dataset.dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the configuration with the output location and tag blanked,
    /// so reruns into another directory share the hash.
    pub fn experiment_hash(&self) -> String {
        let neutral = Self { out_dir: PathBuf::new(), tag: String::new(), ..self.clone() };
        hex::encode(Sha256::digest(neutral.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.dataset;
        if d.source == DataSource::Synth {
            if d.size < 8 {
                return Err(bad("dataset.size", format!("{} is below the minimum of 8", d.size)));
            }
            if d.per_class == 0 {
                return Err(bad("dataset.per_class", "must be positive"));
            }
            if d.test_per_class == 0 {
                return Err(bad("dataset.test_per_class", "must be positive"));
            }
        }
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            return Err(bad("tag", format!("`{}` is not usable in a file name", self.tag)));
        }
        if self.filters.is_empty() {
            return Err(bad("filters", "at least one filter is required"));
        }
        let shape = self.image_shape();
        let mut names = HashSet::new();
        for (i, f) in self.filters.iter().enumerate() {
            check_name(&format!("filters[{i}].name"), &f.name)?;
            if !names.insert(f.name.clone()) {
                return Err(bad(format!("filters[{i}].name"), format!("duplicate name `{}`", f.name)));
            }
            f.filter.output_shape(shape).map_err(|e| bad(format!("filters[{i}].filter"), e.to_string()))?;
            if let Some(t) = &f.train {
                validate_train(&format!("filters[{i}].train"), t)?;
            }
        }
        for n in self.gaussian_names().into_iter().chain(self.adversarial.enabled.then(|| "adv".to_string())) {
            if !names.insert(n.clone()) {
                return Err(bad("filters", format!("name `{n}` is reserved for a noise or adversarially trained model")));
            }
        }
        if let Some(arch) = &self.architecture {
            if arch.is_empty() {
                return Err(bad("architecture", "must list at least one layer"));
            }
        }
        validate_train("train", &self.train)?;
        if !(self.gaussian.sigma >= 0.0 && self.gaussian.sigma.is_finite()) {
            return Err(bad("gaussian.sigma", format!("{} must be >= 0", self.gaussian.sigma)));
        }
        let adv = &self.adversarial;
        if adv.enabled {
            if !(adv.epsilon > 0.0 && adv.epsilon.is_finite()) {
                return Err(bad("adversarial.epsilon", format!("{} must be > 0", adv.epsilon)));
            }
            if adv.steps == 0 {
                return Err(bad("adversarial.steps", "must be positive"));
            }
            if !(adv.step > 0.0 && adv.step <= adv.epsilon) {
                return Err(bad("adversarial.step", format!("{} must be in (0, epsilon]", adv.step)));
            }
        }
        validate_attack(&self.attack)?;
        let n = &self.noise;
        if !(n.epsilon_max > 0.0 && n.epsilon_max.is_finite()) {
            return Err(bad("noise.epsilon_max", format!("{} must be > 0", n.epsilon_max)));
        }
        if n.samples_per_image == 0 {
            return Err(bad("noise.samples_per_image", "must be positive"));
        }
        if n.num_images == 0 {
            return Err(bad("noise.num_images", "must be positive"));
        }
        if self.eval.epsilons.is_empty() {
            return Err(bad("eval.epsilons", "must list at least one radius"));
        }
        for (i, e) in self.eval.epsilons.iter().enumerate() {
            if !(*e >= 0.0 && e.is_finite()) {
                return Err(bad(format!("eval.epsilons[{i}]"), format!("{e} must be >= 0")));
            }
        }
        if self.eval.images == 0 {
            return Err(bad("eval.images", "must be positive"));
        }
        if !names.contains(&self.eval.transfer_source) {
            return Err(bad("eval.transfer_source", format!("unknown model `{}`", self.eval.transfer_source)));
        }
        for (i, m) in self.eval.models.iter().enumerate() {
            if !names.contains(m) {
                return Err(bad(format!("eval.models[{i}]"), format!("unknown model `{m}`")));
            }
        }
        let c = &self.correlate;
        if c.select == 0 || c.select > self.filters.len() {
            return Err(bad("correlate.select", format!("{} outside 1..={}", c.select, self.filters.len())));
        }
        if c.must_include.len() > c.select {
            return Err(bad("correlate.must_include", "lists more filters than correlate.select"));
        }
        for (i, m) in c.must_include.iter().enumerate() {
            if !self.filters.iter().any(|f| &f.name == m) {
                return Err(bad(format!("correlate.must_include[{i}]"), format!("unknown filter `{m}`")));
            }
        }
        let mut ens = HashSet::new();
        for (i, e) in self.ensembles.iter().enumerate() {
            check_name(&format!("ensembles[{i}].name"), &e.name)?;
            if !ens.insert(e.name.clone()) {
                return Err(bad(format!("ensembles[{i}].name"), format!("duplicate name `{}`", e.name)));
            }
            if e.members.is_empty() {
                return Err(bad(format!("ensembles[{i}].members"), "must list at least one model"));
            }
            for (j, m) in e.members.iter().enumerate() {
                if !names.contains(m) {
                    return Err(bad(format!("ensembles[{i}].members[{j}]"), format!("unknown model `{m}`")));
                }
            }
        }
        if !self.ensembles.is_empty() && !ens.contains(&self.certify.ensemble) {
            return Err(bad("certify.ensemble", format!("unknown ensemble `{}`", self.certify.ensemble)));
        }
        if self.certify.images == 0 {
            return Err(bad("certify.images", "must be positive"));
        }
        Ok(())
    }
}

fn check_name(path: &str, name: &str) -> Result<(), ConfigError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(bad(path, format!("`{name}` is not usable as a file name")));
    }
    Ok(())
}

fn validate_attack(a: &AttackConfig) -> Result<(), ConfigError> {
    if !(a.radius >= 0.0 && a.radius.is_finite()) {
        return Err(bad("attack.radius", format!("{} must be >= 0", a.radius)));
    }
    if a.steps == 0 {
        return Err(bad("attack.steps", "must be positive"));
    }
    a.validate().map_err(|e| bad("attack.step_size", e.to_string()))
}

fn validate_train(path: &str, t: &TrainConfig) -> Result<(), ConfigError> {
    for (i, r) in t.learning_rates.iter().enumerate() {
        if !(*r > 0.0 && r.is_finite()) {
            return Err(bad(format!("{path}.learning_rates[{i}]"), format!("{r} must be > 0")));
        }
    }
    if t.batch_size == 0 {
        return Err(bad(format!("{path}.batch_size"), "must be positive"));
    }
    Ok(())
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(key, "empty key segment"));
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| bad(parts[..=i].join("."), "is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the config file (if any), applies overrides in order, deserialises and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| bad(p.display().to_string(), e.to_string()))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| bad(p.display().to_string(), e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        bad(if path == "." { "config".to_string() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}
