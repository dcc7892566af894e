//! The subcommands. Each one writes a CSV artifact and returns it.

use std::path::PathBuf;

use anyhow::{bail, Context as _};
use fens::attacks::{accuracy_on, attack_all, robust_accuracy, transfer_eval, Attackable};
use fens::data::{load_cifar10, synth_shapes};
use fens::ensemble::{
    adversarial_train, certify_submodel, gaussian_noise_submodels, pairwise_bound, train_submodel, Ensemble,
    EnsembleManifest, EnsembleMode, ManifestEntry, SubModel,
};
use fens::filters::FilterSpec;
use fens::nn::{accuracy, load_network, save_network, EpochStats, Network};
use fens::sensitivity::{pearson_matrix, sample_sensitivities, select_min_correlated};
use fens::{Dataset64, Image64, SubModel64};

use crate::config::{DataSource, ExperimentConfig};
use crate::output::{fixed, num, write, write_artifact, Artifact, Table};

/// Loaded datasets for one configuration.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub train: Dataset64,
    pub test: Dataset64,
}

impl Context {
    pub fn load(cfg: ExperimentConfig) -> anyhow::Result<Self> {
        let d = &cfg.dataset;
        let (train, test) = match d.source {
            DataSource::Synth => (
                synth_shapes(d.per_class, d.size, d.seed)?,
                synth_shapes(d.test_per_class, d.size, d.seed.wrapping_add(1))?,
            ),
            DataSource::Cifar10 => {
                let dir = cfg.data_dir().with_context(|| {
                    format!("dataset.dir is unset and ${} is not defined", crate::config::DATA_DIR_ENV)
                })?;
                let (mut train, mut test) = load_cifar10(&dir)?;
                if d.train_size > 0 {
                    train = train.subset(d.train_size, d.seed)?;
                }
                if d.test_size > 0 {
                    test = test.subset(d.test_size, d.seed.wrapping_add(1))?;
                }
                (train, test)
            }
        };
        Ok(Self { cfg, train, test })
    }

    /// The first `eval.images` test images.
    pub fn eval_set(&self) -> (&[Image64], &[usize]) {
        let n = self.cfg.eval.images.min(self.test.len());
        (&self.test.images[..n], &self.test.labels[..n])
    }

    pub fn model_path(&self, name: &str) -> PathBuf {
        self.cfg.models_dir().join(format!("{name}.fenet"))
    }

    pub fn submodel(&self, name: &str) -> anyhow::Result<SubModel64> {
        let filter = self.cfg.filter_of(name).with_context(|| format!("unknown model `{name}`"))?;
        let path = self.model_path(name);
        if !path.exists() {
            bail!("missing model file {} (run `fens train` first)", path.display());
        }
        let net: Network<f64> = load_network(&path).with_context(|| format!("loading {}", path.display()))?;
        Ok(SubModel::new(name, filter, net, self.cfg.image_shape())?)
    }

    pub fn manifest_path(&self, ensemble: &str) -> PathBuf {
        self.cfg.models_dir().join(format!("{ensemble}.toml"))
    }

    pub fn ensemble(&self, name: &str) -> anyhow::Result<Ensemble<f64>> {
        let path = self.manifest_path(name);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("missing ensemble manifest {} (run `fens train` first)", path.display()))?;
        let manifest: EnsembleManifest = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(manifest.load(&self.cfg.models_dir())?)
    }
}

fn eps_comment() -> String {
    "epsilon is in 1/255 pixel units".to_string()
}

fn log_rows(table: &mut Table, model: &str, stats: &[EpochStats], test_acc: f64) {
    for s in stats {
        table.push(vec![
            model.to_string(),
            s.epoch.to_string(),
            num(s.learning_rate),
            num(s.mean_loss),
            num(s.accuracy),
            String::new(),
        ]);
    }
    table.push(vec![model.to_string(), "final".into(), String::new(), String::new(), String::new(), num(test_acc)]);
}

/// Trains every filter model, the noise-trained models and optionally the adversarial model.
pub fn train(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let models = cfg.models_dir();
    std::fs::create_dir_all(&models).with_context(|| format!("creating {}", models.display()))?;
    let arch = cfg.architecture(ctx.train.num_classes);
    let mut table = Table::new(&["model", "epoch", "learning_rate", "mean_loss", "train_accuracy", "test_accuracy"]);
    let mut notes = Vec::new();
    let mut record = |sm: &SubModel64, stats: &[EpochStats], table: &mut Table| -> anyhow::Result<()> {
        save_network(&sm.net, ctx.model_path(&sm.name))?;
        let acc = accuracy(&sm.net, &ctx.test.filtered_tensors(&sm.filter)?, &ctx.test.labels)?;
        log_rows(table, &sm.name, stats, acc);
        notes.push(format!("{}: test accuracy {:.4}", sm.name, acc));
        Ok(())
    };
    for (i, f) in cfg.filters.iter().enumerate() {
        let schedule = f.train.as_ref().unwrap_or(&cfg.train);
        let (sm, stats) = train_submodel(&f.name, f.filter, &arch, &ctx.train, schedule, cfg.seed.wrapping_add(i as u64))?;
        record(&sm, &stats, &mut table)?;
    }
    let base = cfg.seed.wrapping_add(cfg.filters.len() as u64);
    if cfg.gaussian.count > 0 {
        for (sm, stats) in gaussian_noise_submodels(&arch, &ctx.train, cfg.gaussian.sigma, cfg.gaussian.count, &cfg.train, base)? {
            record(&sm, &stats, &mut table)?;
        }
    }
    if cfg.adversarial.enabled {
        let a = &cfg.adversarial;
        let attack = fens::attacks::AttackConfig {
            steps: a.steps,
            step_size: a.step / 255.0,
            rng_seed: cfg.attack.rng_seed,
            ..fens::attacks::AttackConfig::pgd(a.epsilon / 255.0)
        };
        let seed = base.wrapping_add(cfg.gaussian.count as u64);
        let (net, stats) = adversarial_train(&arch, &ctx.train, &attack, &cfg.train, seed)?;
        let sm = SubModel::new("adv", FilterSpec::Identity, net, cfg.image_shape())?;
        record(&sm, &stats, &mut table)?;
    }
    for e in &cfg.ensembles {
        let manifest = EnsembleManifest {
            mode: EnsembleMode::Vote,
            image_shape: cfg.image_shape(),
            submodels: e
                .members
                .iter()
                .map(|m| ManifestEntry {
                    name: m.clone(),
                    filter: cfg.filter_of(m).expect("validated member"),
                    model: PathBuf::from(format!("{m}.fenet")),
                })
                .collect(),
        };
        write(&ctx.manifest_path(&e.name), toml::to_string(&manifest)?.as_bytes())?;
    }
    write_artifact(cfg, "train", &[], table, notes)
}

/// Sensitivity correlation matrix over every configured filter.
pub fn correlate(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let names: Vec<String> = cfg.filters.iter().map(|f| f.name.clone()).collect();
    let specs: Vec<FilterSpec> = cfg.filters.iter().map(|f| f.filter).collect();
    let samples = sample_sensitivities(&specs, &ctx.test.images, &cfg.noise)?;
    let matrix = pearson_matrix(&names, &samples)?;
    let must: Vec<&str> = cfg.correlate.must_include.iter().map(String::as_str).collect();
    let chosen = select_min_correlated(&matrix, cfg.correlate.select, &must)?;
    let mut notes: Vec<String> = matrix
        .ranked_pairs()
        .iter()
        .map(|&(i, j, r)| format!("{:>12} ~ {:<12} {r:+.3}", names[i], names[j]))
        .collect();
    notes.push(format!("selected: {}", chosen.join(", ")));
    let mut table = Table { columns: names.clone(), rows: Vec::new() };
    for row in &matrix.rho {
        table.push(row.iter().map(|v| fixed(*v, 6)).collect());
    }
    let comments = vec![
        format!("{} samples from {} images", samples.len(), cfg.noise.num_images),
        format!("selected {}", chosen.join(" ")),
    ];
    write_artifact(cfg, "correlate", &comments, table, notes)
}

fn eps_rows(table: &mut Table, eps: f64, name: &str, acc: f64) {
    table.push(vec![num(eps), name.to_string(), fixed(acc, 4)]);
}

/// Accuracy of each model under its own (BPDA) attack.
pub fn attack(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let (images, labels) = ctx.eval_set();
    let radii: Vec<f64> = cfg.eval.epsilons.iter().map(|e| e / 255.0).collect();
    let mut per_model = Vec::new();
    for name in cfg.eval_models() {
        let sm = ctx.submodel(&name)?;
        per_model.push((name, robust_accuracy(&sm, images, labels, &radii, &cfg.attack)?));
    }
    let mut table = Table::new(&["epsilon", "model_name", "accuracy"]);
    for (k, &eps) in cfg.eval.epsilons.iter().enumerate() {
        for (name, accs) in &per_model {
            eps_rows(&mut table, eps, name, accs[k]);
        }
    }
    write_artifact(cfg, "attack", &[eps_comment()], table, Vec::new())
}

/// Adversarial examples crafted on the source model, scored on every model.
pub fn transfer(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let (images, labels) = ctx.eval_set();
    let source = ctx.submodel(&cfg.eval.transfer_source)?;
    let targets: Vec<SubModel64> = cfg.eval_models().iter().map(|n| ctx.submodel(n)).collect::<anyhow::Result<_>>()?;
    let refs: Vec<(&str, &dyn Attackable<f64>)> =
        targets.iter().map(|t| (t.name.as_str(), t as &dyn Attackable<f64>)).collect();
    let radii: Vec<f64> = cfg.eval.epsilons.iter().map(|e| e / 255.0).collect();
    let rows = transfer_eval(&source, &refs, images, labels, &radii, &cfg.attack)?;
    let mut table = Table::new(&["epsilon", "model_name", "accuracy"]);
    for (r, row) in rows.iter().enumerate() {
        eps_rows(&mut table, cfg.eval.epsilons[r / refs.len()], &row.model_name, row.accuracy);
    }
    let comments = vec![eps_comment(), format!("source model {}", cfg.eval.transfer_source)];
    write_artifact(cfg, "transfer", &comments, table, Vec::new())
}

/// Sum-gradient BPDA attack on each ensemble; reports vote, score and per-member accuracy.
pub fn ensemble_eval(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let (images, labels) = ctx.eval_set();
    let ensembles: Vec<(String, Ensemble<f64>)> =
        cfg.ensembles.iter().map(|e| Ok((e.name.clone(), ctx.ensemble(&e.name)?))).collect::<anyhow::Result<_>>()?;
    let adv = if cfg.adversarial.enabled { Some(ctx.submodel("adv")?) } else { None };
    let mut table = Table::new(&["epsilon", "model_name", "accuracy"]);
    for &eps in &cfg.eval.epsilons {
        let atk = cfg.attack.with_radius(eps / 255.0);
        for (name, ens) in &ensembles {
            let adv_images: Vec<Image64> =
                attack_all(ens, images, labels, &atk)?.into_iter().map(|r| r.adversarial).collect();
            for (mode, tag) in [(EnsembleMode::Vote, "vote"), (EnsembleMode::Score, "score")] {
                eps_rows(&mut table, eps, &format!("{name}:{tag}"), accuracy_on(&ens.with_mode(mode), &adv_images, labels)?);
            }
            for sm in ens.submodels() {
                eps_rows(&mut table, eps, &format!("{name}/{}", sm.name), accuracy_on(sm, &adv_images, labels)?);
            }
        }
        if let Some(sm) = &adv {
            eps_rows(&mut table, eps, "adv", robust_accuracy(sm, images, labels, &[eps / 255.0], &cfg.attack)?[0]);
        }
    }
    write_artifact(cfg, "ensemble-eval", &[eps_comment()], table, Vec::new())
}

/// Margin certificates for the members of one ensemble, plus pairwise bounds.
///
/// `single` rows hold margin, Lipschitz bound and radius. `pair` rows hold the
/// product of the two margins, the product of the two bounds and
/// `margin / (2 * lipschitz)`, the pairwise bound.
pub fn certify(ctx: &Context) -> anyhow::Result<Artifact> {
    let cfg = &ctx.cfg;
    let ens = ctx.ensemble(&cfg.certify.ensemble)?;
    let n = cfg.certify.images.min(ctx.test.len());
    let mut table = Table::new(&["image_id", "label", "kind", "model", "margin", "lipschitz", "radius"]);
    for i in 0..n {
        let x = &ctx.test.images[i];
        let label = ctx.test.labels[i].to_string();
        let certs = ens.submodels().iter().map(|sm| certify_submodel(sm, x)).collect::<fens::Result<Vec<_>>>()?;
        for c in &certs {
            table.push(vec![
                i.to_string(),
                label.clone(),
                "single".into(),
                c.submodel_name.clone(),
                num(c.margin),
                num(c.lipschitz),
                num(c.radius),
            ]);
        }
        for (a, ca) in certs.iter().enumerate() {
            for cb in &certs[a + 1..] {
                table.push(vec![
                    i.to_string(),
                    label.clone(),
                    "pair".into(),
                    format!("{}&{}", ca.submodel_name, cb.submodel_name),
                    num(ca.margin * cb.margin),
                    num(ca.lipschitz * cb.lipschitz),
                    num(pairwise_bound(ca, cb)),
                ]);
            }
        }
    }
    let comments = vec![format!("ensemble {}; radii are L2 in each network's input space", cfg.certify.ensemble)];
    write_artifact(cfg, "certify", &comments, table, Vec::new())
}
