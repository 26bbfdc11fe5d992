//! Joint training of both stages with Adam.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{save_checkpoint, Adam, AdamConfig, CheckpointError, Gradients, Graph, ParamStore};
use crate::corpus::Entity;
use crate::model::{DecodeMode, Dropout, Example, LossTerms, Model, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: ModelError },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Template Stage 2 conditions on during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stage2Template {
    #[default]
    Gold,
    /// Stage 1's greedy output under the current parameters.
    Generated,
}

impl FromStr for Stage2Template {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gold" => Ok(Self::Gold),
            "generated" => Ok(Self::Generated),
            other => Err(format!("expected gold or generated, got `{other}`")),
        }
    }
}

impl fmt::Display for Stage2Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gold => "gold",
            Self::Generated => "generated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    /// Validate every this many epochs.
    pub validate_every: usize,
    /// Stop after this many validations without improvement (0 disables).
    pub patience: usize,
    pub dropout: f64,
    pub stage2_template: Stage2Template,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            max_epochs: 50,
            seed: 1,
            grad_clip_norm: 5.0,
            validate_every: 1,
            patience: 5,
            dropout: 0.0,
            stage2_template: Stage2Template::Gold,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.validate_every == 0 {
            return bad("validate_every must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// Owns the model and optimizer state across steps.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub terms: LossTerms,
    adam: Adam,
    order_rng: ChaCha8Rng,
    dropout: Option<Dropout>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(config.adam(), &model.store);
        let dropout = (config.dropout > 0.0).then(|| Dropout::new(config.dropout, config.seed ^ 0x5eed));
        let order_rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { model, config, terms: LossTerms::default(), adam, order_rng, dropout })
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    fn stage2_input(&self, ex: &Example) -> Result<Option<Example>> {
        if self.config.stage2_template == Stage2Template::Gold {
            return Ok(None);
        }
        let mut g = Graph::new(&self.model.store);
        let enc = self.model.encode(&mut g, ex)?;
        let mut ids = self.model.generate_template_ids(&mut g, &enc, DecodeMode::Greedy)?;
        if ids.is_empty() {
            ids.push(self.model.vocabs.template.id(crate::annotator::HEAD_SLOT));
        }
        ids.push(self.model.vocabs.template.eos());
        Ok(Some(Example { template_targets: ids, ..ex.clone() }))
    }

    /// Accumulates the gradient of the summed example losses into `grads`
    /// and returns the summed loss.
    fn accumulate(&mut self, ex: &Example, grads: &mut Gradients) -> Result<f64> {
        let generated = self.stage2_input(ex)?;
        let mut g = Graph::new(&self.model.store);
        let mut dropout = self.dropout.as_mut();
        let loss = match &generated {
            None => self.model.joint_loss(&mut g, ex, self.terms, dropout)?,
            Some(alt) => {
                // L1 on the gold template, L2 conditioned on the generated one
                let l1 = self.model.joint_loss(&mut g, ex, LossTerms { template: self.terms.template, description: false }, dropout.as_deref_mut())?;
                let l2 = self.model.joint_loss(&mut g, alt, LossTerms { template: false, description: self.terms.description }, dropout)?;
                let total = g.add(l1.total, l2.total).map_err(ModelError::from)?;
                crate::model::JointLoss { template: l1.template, description: l2.description, total }
            }
        };
        g.backward_into(loss.total, grads).map_err(ModelError::from)?;
        Ok(g.value(loss.total)[0])
    }

    /// One optimizer step on the mean loss of `batch`. Returns the mean loss.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let mut grads = Gradients::zeros_like(&self.model.store);
        let mut total = 0.0;
        for ex in batch {
            total += self.accumulate(ex, &mut grads)?;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        grads.clip_global_norm(self.config.grad_clip_norm);
        self.adam.step(&mut self.model.store, &grads).map_err(ModelError::from)?;
        Ok(total / n)
    }

    /// One pass over `data` in a seeded random order. Returns the mean
    /// per-example training loss and the per-step losses.
    pub fn run_epoch(&mut self, data: &[Example]) -> Result<(f64, Vec<f64>)> {
        if data.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.order_rng);
        let mut step_losses = Vec::new();
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
            let loss = self.train_step(&batch)?;
            total += loss * batch.len() as f64;
            step_losses.push(loss);
        }
        Ok((total / data.len() as f64, step_losses))
    }
}

/// Mean per-example joint loss.
pub fn mean_loss(model: &Model, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for ex in data {
        total += model.loss_value(ex)?;
    }
    Ok(total / data.len() as f64)
}

/// Fraction of entities whose greedy Stage-1 template equals the gold one.
pub fn template_exact_match(model: &Model, entities: &[Entity]) -> Result<f64> {
    let mut hits = 0;
    for e in entities {
        let ex = model.example(e, None)?;
        let mut g = Graph::new(&model.store);
        let enc = model.encode(&mut g, &ex)?;
        let ids = model.generate_template_ids(&mut g, &enc, DecodeMode::Greedy)?;
        let gold = &ex.template_targets[..ex.template_targets.len().saturating_sub(1)];
        hits += usize::from(ids == gold);
    }
    Ok(hits as f64 / entities.len().max(1) as f64)
}

/// Position-aligned token accuracy of greedy Stage-2 output conditioned on
/// the gold template; each entity counts `max(|hyp|, |ref|)` positions.
pub fn description_token_accuracy(model: &Model, entities: &[Entity]) -> Result<f64> {
    let (mut hits, mut total) = (0, 0);
    for e in entities {
        let template = e.template.as_deref().ok_or_else(|| ModelError::MissingTemplate(e.entity_id.clone()))?;
        let out = model.generate(e, DecodeMode::Greedy, Some(template))?;
        let reference = e.description_tokens();
        hits += out.description.iter().zip(&reference).filter(|(a, b)| a == b).count();
        total += out.description.len().max(reference.len());
    }
    Ok(hits as f64 / total.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` on epochs without validation.
    pub valid_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub step_losses: Vec<f64>,
    /// Parameters at the best validation point.
    pub best: ParamStore,
    pub stopped_early: bool,
}

pub const LOG_HEADER: &str = "epoch,train_loss,valid_loss,seconds";

fn csv_line(r: &EpochRecord) -> String {
    let valid = r.valid_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
    format!("{},{:.6},{},{:.3}", r.epoch, r.train_loss, valid, r.seconds)
}

/// Output locations for [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl TrainOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self { checkpoint: dir.join("model.ckpt"), log: dir.join("train_log.csv") }
    }
}

/// Full training loop with validation, best-checkpoint retention, early
/// stopping and divergence handling. `on_epoch` sees every record; returning
/// `false` stops training after that epoch.
pub fn train<F>(trainer: &mut Trainer, train: &[Example], valid: &[Example], outputs: Option<&TrainOutputs>, mut on_epoch: F) -> Result<TrainReport>
where
    F: FnMut(&EpochRecord, &Model) -> bool,
{
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut log = match outputs {
        Some(o) => {
            let mut f = File::create(&o.log).map_err(|source| TrainError::Io { path: o.log.clone(), source })?;
            writeln!(f, "{LOG_HEADER}").map_err(|source| TrainError::Io { path: o.log.clone(), source })?;
            Some((f, o.log.clone()))
        }
        None => None,
    };
    let start = Instant::now();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        step_losses: Vec::new(),
        best: trainer.model.store.clone(),
        stopped_early: false,
    };
    let mut stale = 0;
    for epoch in 1..=trainer.config.max_epochs {
        let last_good = trainer.model.store.clone();
        let (train_loss, steps) = match trainer.run_epoch(train) {
            Ok(r) => r,
            Err(TrainError::Model(source)) => {
                trainer.model.store = last_good;
                if let Some(o) = outputs {
                    save_checkpoint(&report.best, &o.checkpoint)?;
                }
                return Err(TrainError::Diverged { epoch, source });
            }
            Err(e) => return Err(e),
        };
        report.step_losses.extend(steps);

        let validate = epoch % trainer.config.validate_every == 0 || epoch == trainer.config.max_epochs;
        let valid_loss = if validate {
            Some(if valid.is_empty() { train_loss } else { mean_loss(&trainer.model, valid)? })
        } else {
            None
        };
        let record = EpochRecord { epoch, train_loss, valid_loss, seconds: start.elapsed().as_secs_f64() };
        if let Some((f, path)) = log.as_mut() {
            writeln!(f, "{}", csv_line(&record)).map_err(|source| TrainError::Io { path: path.clone(), source })?;
        }
        let keep_going = on_epoch(&record, &trainer.model);
        report.epochs.push(record);

        if let Some(v) = valid_loss {
            if v < report.best_loss {
                report.best_loss = v;
                report.best_epoch = epoch;
                report.best = trainer.model.store.clone();
                stale = 0;
                if let Some(o) = outputs {
                    save_checkpoint(&report.best, &o.checkpoint)?;
                }
            } else {
                stale += 1;
                if trainer.config.patience > 0 && stale >= trainer.config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        if !keep_going {
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{Annotator, RuleAnnotator};
    use crate::corpus::build_vocabs;
    use crate::lexicon::Lexicon;
    use crate::model::ModelConfig;
    use crate::synthetic;

    fn small_setup(n: usize) -> (Model, Vec<Example>) {
        let ann = RuleAnnotator::new(Lexicon::english());
        let mut ents = synthetic::generate(n, 5);
        for e in &mut ents {
            e.template = Some(ann.annotate(&e.description_tokens()).unwrap().template_string());
        }
        let vocabs = build_vocabs(&ents, 500, 500, 8, &Lexicon::english()).unwrap();
        let cfg = ModelConfig { hidden: 16, word_dim: 12, prop_dim: 6, pos_dim: 6, max_position: 8, ..ModelConfig::default() };
        let model = Model::new(cfg, vocabs, 11).unwrap();
        let exs = ents.iter().map(|e| model.example(e, None).unwrap()).collect();
        (model, exs)
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert_eq!("generated".parse::<Stage2Template>().unwrap(), Stage2Template::Generated);
    }

    #[test]
    fn single_example_loss_decreases_for_twenty_steps() {
        let (model, exs) = small_setup(1);
        let mut t = Trainer::new(model, TrainConfig { batch_size: 1, ..TrainConfig::default() }).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..20 {
            t.train_step(&exs[..1]).unwrap();
            let l = t.model.loss_value(&exs[0]).unwrap();
            assert!(l < prev, "{l} >= {prev}");
            prev = l;
        }
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (model, exs) = small_setup(4);
        let before = model.store.clone();
        let mut t = Trainer::new(model, TrainConfig { lr: 0.0, ..TrainConfig::default() }).unwrap();
        for _ in 0..3 {
            t.run_epoch(&exs).unwrap();
        }
        assert_eq!(t.model.store, before);
    }

    #[test]
    fn without_description_loss_stage2_params_stay() {
        let (model, exs) = small_setup(2);
        let stage2 = model.stage2_params();
        assert!(!stage2.is_empty());
        let before = model.store.clone();
        let mut t = Trainer::new(model, TrainConfig::default()).unwrap();
        t.terms = LossTerms { template: true, description: false };
        t.train_step(&exs).unwrap();
        for id in stage2 {
            assert_eq!(t.model.store.get(id), before.get(id), "{}", before.name(id));
        }
        assert_ne!(t.model.store, before);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let (model, exs) = small_setup(6);
            let mut t = Trainer::new(model, TrainConfig { batch_size: 4, ..TrainConfig::default() }).unwrap();
            let mut losses = Vec::new();
            for _ in 0..2 {
                losses.extend(t.run_epoch(&exs).unwrap().1);
            }
            losses
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_loop_writes_log_and_checkpoint() {
        let (model, exs) = small_setup(6);
        let dir = tempfile::tempdir().unwrap();
        let outputs = TrainOutputs::in_dir(dir.path());
        let mut t = Trainer::new(model, TrainConfig { max_epochs: 3, batch_size: 3, ..TrainConfig::default() }).unwrap();
        let report = train(&mut t, &exs[..4], &exs[4..], Some(&outputs), |_, _| true).unwrap();
        assert_eq!(report.epochs.len(), 3);
        let log = std::fs::read_to_string(&outputs.log).unwrap();
        assert_eq!(log.lines().next().unwrap(), LOG_HEADER);
        assert_eq!(log.lines().count(), 4);
        let restored = crate::autograd::load_checkpoint(&outputs.checkpoint).unwrap();
        assert_eq!(restored, report.best);
    }

    #[test]
    fn generated_template_mode_trains() {
        let (model, exs) = small_setup(3);
        let mut t = Trainer::new(model, TrainConfig { stage2_template: Stage2Template::Generated, dropout: 0.2, ..TrainConfig::default() }).unwrap();
        let (loss, _) = t.run_epoch(&exs).unwrap();
        assert!(loss.is_finite());
    }
}
