//! Two-stage generator: infobox -> head-modifier template -> description.

mod decode;
pub mod stage1;
pub mod stage2;

pub use decode::{argmax, beam, decode, greedy, DecodeMode};
pub use stage1::{EncoderOutput, Stage1Step};
pub use stage2::{ExtendedVocab, GateState, Stage2Step, StepDistribution};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotator::HEAD_SLOT;
use crate::autograd::{Axis, Graph, GraphError, ParamId, ParamStore, Var};
use crate::corpus::{reconstruct_infobox, Entity, VocabSet, DEFAULT_MAX_POSITION};
use crate::layers::{GeneralAttention, GruCell, Linear};
use crate::lexicon::tokenize;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("entity `{0}` has no infobox values")]
    EmptySource(String),
    #[error("empty template")]
    EmptyTemplate,
    #[error("entity `{0}` has no gold template")]
    MissingTemplate(String),
    #[error("token id {id} out of range for vocabulary of size {len}")]
    UnknownToken { id: usize, len: usize },
    #[error("non-finite loss for entity `{0}`")]
    NonFinite(String),
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub word_dim: usize,
    pub prop_dim: usize,
    pub pos_dim: usize,
    pub max_position: usize,
    pub max_template_len: usize,
    pub max_description_len: usize,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            word_dim: 256,
            prop_dim: 128,
            pos_dim: 128,
            max_position: DEFAULT_MAX_POSITION,
            max_template_len: 16,
            max_description_len: 24,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.hidden, self.word_dim, self.prop_dim, self.pos_dim, self.max_position, self.max_template_len, self.max_description_len];
        if dims.contains(&0) {
            return Err(ModelError::Config("dimensions and lengths must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(ModelError::Config("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Context gates: `g = sigmoid(W e + U s + C c + b)`.
#[derive(Debug, Clone, Copy)]
pub struct Gate {
    pub w: Linear,
    pub u: Linear,
    pub c: Linear,
}

/// Parameter handles of every component.
#[derive(Debug, Clone)]
pub struct Network {
    pub value_emb: ParamId,
    pub prop_emb: ParamId,
    pub pos_emb: ParamId,
    pub encoder: GruCell,

    pub template_emb: ParamId,
    pub t_init: Linear,
    pub t_attention: GeneralAttention,
    pub t_decoder: GruCell,
    pub t_output: Linear,

    pub template_fwd: GruCell,
    pub template_bwd: GruCell,
    pub template_proj: Linear,

    pub word_emb: ParamId,
    pub d_init: Linear,
    pub source_attention: GeneralAttention,
    pub template_attention: GeneralAttention,
    pub gate_x: Gate,
    pub gate_t: Gate,
    /// `W e + U s + b`, the target-side term of the fused context.
    pub fuse_w: Linear,
    pub fuse_u: Linear,
    pub fuse_cx: Linear,
    pub fuse_ct: Linear,
    pub d_decoder: GruCell,
    pub generate: Linear,
    pub copy: Linear,
    pub switch_hidden: Linear,
    pub switch_out: Linear,
}

/// Prefix shared by the parameters used only by the description stage.
pub const STAGE2_PREFIX: &str = "desc.";

impl Network {
    pub fn new<R: Rng>(store: &mut ParamStore, config: &ModelConfig, vocabs: &VocabSet, rng: &mut R) -> Self {
        let ModelConfig { hidden: h, word_dim: w, prop_dim, pos_dim, init_scale: s, .. } = *config;
        let source_dim = w + prop_dim + pos_dim;
        let gate = |store: &mut ParamStore, name: &str, rng: &mut R| Gate {
            w: Linear::new(store, &format!("{name}.w"), w, h, true, s, rng),
            u: Linear::new(store, &format!("{name}.u"), h, h, false, s, rng),
            c: Linear::new(store, &format!("{name}.c"), h, h, false, s, rng),
        };
        Self {
            value_emb: store.add_uniform("enc.value_emb", vocabs.value.len(), w, s, rng),
            prop_emb: store.add_uniform("enc.prop_emb", vocabs.property.len(), prop_dim, s, rng),
            pos_emb: store.add_uniform("enc.pos_emb", vocabs.position_count.max(1), pos_dim, s, rng),
            encoder: GruCell::new(store, "enc.gru", source_dim, h, s, rng),

            template_emb: store.add_uniform("tmpl.emb", vocabs.template.len(), w, s, rng),
            t_init: Linear::new(store, "tmpl.init", h, h, true, s, rng),
            t_attention: GeneralAttention::new(store, "tmpl.attention", h, s, rng),
            t_decoder: GruCell::new(store, "tmpl.gru", w + h, h, s, rng),
            t_output: Linear::new(store, "tmpl.out", 2 * h, vocabs.template.len(), true, s, rng),

            template_fwd: GruCell::new(store, "desc.tenc_fwd", w, h, s, rng),
            template_bwd: GruCell::new(store, "desc.tenc_bwd", w, h, s, rng),
            template_proj: Linear::new(store, "desc.tenc_proj", 2 * h, h, true, s, rng),

            word_emb: store.add_uniform("desc.word_emb", vocabs.target.len(), w, s, rng),
            d_init: Linear::new(store, "desc.init", h, h, true, s, rng),
            source_attention: GeneralAttention::new(store, "desc.source_attention", h, s, rng),
            template_attention: GeneralAttention::new(store, "desc.template_attention", h, s, rng),
            gate_x: gate(store, "desc.gate_x", rng),
            gate_t: gate(store, "desc.gate_t", rng),
            fuse_w: Linear::new(store, "desc.fuse_w", w, h, true, s, rng),
            fuse_u: Linear::new(store, "desc.fuse_u", h, h, false, s, rng),
            fuse_cx: Linear::new(store, "desc.fuse_cx", h, h, false, s, rng),
            fuse_ct: Linear::new(store, "desc.fuse_ct", h, h, false, s, rng),
            d_decoder: GruCell::new(store, "desc.gru", w + h, h, s, rng),
            generate: Linear::new(store, "desc.generate", 2 * h, vocabs.target.len(), true, s, rng),
            copy: Linear::new(store, "desc.copy", h, h, true, s, rng),
            switch_hidden: Linear::new(store, "desc.switch_hidden", 2 * h, h, true, s, rng),
            switch_out: Linear::new(store, "desc.switch_out", h, 1, true, s, rng),
        }
    }
}

/// Ids of one infobox token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceIds {
    pub word: usize,
    pub property: usize,
    pub position: usize,
}

/// An entity converted to ids, ready for the loss or for decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub entity_id: String,
    pub source: Vec<SourceIds>,
    pub source_words: Vec<String>,
    pub ext: ExtendedVocab,
    /// Gold template ids followed by eos (empty when no template given).
    pub template_targets: Vec<usize>,
    /// Gold description as extended-vocabulary ids followed by eos.
    pub description_targets: Vec<usize>,
}

/// Output of [`Model::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub template: Vec<String>,
    pub description: Vec<String>,
}

/// Which parts of the joint loss to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub template: bool,
    pub description: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        Self { template: true, description: true }
    }
}

/// Scalar loss nodes: `total = template + description`.
#[derive(Debug, Clone, Copy)]
pub struct JointLoss {
    pub template: Option<Var>,
    pub description: Option<Var>,
    pub total: Var,
}

/// Inverted dropout applied to encoder inputs and output-layer features.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub(crate) fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let n = g.value(x).len();
        let mask = (0..n).map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        Ok(g.mask(x, mask)?)
    }
}

pub(crate) fn maybe_dropout(dropout: &mut Option<&mut Dropout>, g: &mut Graph, x: Var) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(g, x),
        None => Ok(x),
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocabs: VocabSet,
    pub store: ParamStore,
    pub net: Network,
}

impl Model {
    pub fn new(config: ModelConfig, vocabs: VocabSet, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = Network::new(&mut store, &config, &vocabs, &mut rng);
        Ok(Self { config, vocabs, store, net })
    }

    /// Ids of parameters used only by the description stage.
    pub fn stage2_params(&self) -> Vec<ParamId> {
        self.store.iter().filter(|(_, name, _)| name.starts_with(STAGE2_PREFIX)).map(|(id, _, _)| id).collect()
    }

    fn source_of(&self, entity: &Entity) -> Result<(Vec<SourceIds>, Vec<String>)> {
        let tokens = reconstruct_infobox(entity, self.config.max_position);
        if tokens.is_empty() {
            return Err(ModelError::EmptySource(entity.entity_id.clone()));
        }
        let ids = tokens
            .iter()
            .map(|t| SourceIds {
                word: self.vocabs.value.id(&t.word),
                property: self.vocabs.property.id(&t.property),
                position: t.position.min(self.vocabs.position_count.saturating_sub(1)),
            })
            .collect();
        Ok((ids, tokens.into_iter().map(|t| t.word).collect()))
    }

    pub fn template_ids<S: AsRef<str>>(&self, template: &[S]) -> Vec<usize> {
        template.iter().map(|t| self.vocabs.template.id(t.as_ref())).collect()
    }

    /// Converts an entity. `template` falls back to the entity's stored gold
    /// template; with neither, the template targets stay empty.
    pub fn example(&self, entity: &Entity, template: Option<&str>) -> Result<Example> {
        let (source, source_words) = self.source_of(entity)?;
        let ext = ExtendedVocab::new(&self.vocabs.target, &source_words);
        let template_targets = match template.or(entity.template.as_deref()) {
            Some(t) => {
                let toks = tokenize_template(t);
                if toks.is_empty() {
                    return Err(ModelError::EmptyTemplate);
                }
                let mut ids = self.template_ids(&toks);
                ids.push(self.vocabs.template.eos());
                ids
            }
            None => Vec::new(),
        };
        let mut description_targets: Vec<usize> = entity.description_tokens().iter().map(|w| ext.id(&self.vocabs.target, w)).collect();
        description_targets.push(self.vocabs.target.eos());
        Ok(Example { entity_id: entity.entity_id.clone(), source, source_words, ext, template_targets, description_targets })
    }

    /// Builds `L = L1 + L2` under teacher forcing. Stage 2 conditions on the
    /// gold template.
    pub fn joint_loss(&self, g: &mut Graph, ex: &Example, terms: LossTerms, mut dropout: Option<&mut Dropout>) -> Result<JointLoss> {
        if ex.template_targets.is_empty() {
            return Err(ModelError::MissingTemplate(ex.entity_id.clone()));
        }
        let enc = stage1::encode_infobox(self, g, &ex.source, &mut dropout)?;
        let template = if terms.template { Some(stage1::template_loss(self, g, &enc, &ex.template_targets, &mut dropout)?) } else { None };
        let description = if terms.description {
            let gold = &ex.template_targets[..ex.template_targets.len() - 1];
            Some(stage2::description_loss(self, g, &enc, gold, ex, &mut dropout)?)
        } else {
            None
        };
        let total = match (template, description) {
            (Some(a), Some(b)) => g.add(a, b)?,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => g.zeros(1, 1),
        };
        let value = g.value(total)[0];
        if !value.is_finite() {
            return Err(ModelError::NonFinite(ex.entity_id.clone()));
        }
        Ok(JointLoss { template, description, total })
    }

    /// Value of the joint loss for one example.
    pub fn loss_value(&self, ex: &Example) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let loss = self.joint_loss(&mut g, ex, LossTerms::default(), None)?;
        Ok(g.value(loss.total)[0])
    }

    pub fn encode(&self, g: &mut Graph, ex: &Example) -> Result<EncoderOutput> {
        stage1::encode_infobox(self, g, &ex.source, &mut None)
    }

    /// Stage 1 alone: template token ids (without eos).
    pub fn generate_template_ids(&self, g: &mut Graph, enc: &EncoderOutput, mode: DecodeMode) -> Result<Vec<usize>> {
        let v = &self.vocabs.template;
        let start = stage1::initial_state(self, g, enc)?;
        let mut stepper = Stage1Step::new(self, enc);
        decode(mode, start, v.bos(), v.eos(), self.config.max_template_len, |s: &Var, prev| {
            let (dist, next) = stepper.step(g, *s, prev)?;
            Ok::<_, ModelError>((g.value(dist).to_vec(), next))
        })
    }

    /// Stage 2 alone given template ids: extended-vocabulary ids (without eos).
    pub fn generate_description_ids(&self, g: &mut Graph, enc: &EncoderOutput, ex: &Example, template: &[usize], mode: DecodeMode) -> Result<Vec<usize>> {
        let v = &self.vocabs.target;
        let mut stepper = Stage2Step::new(self, g, enc, template, ex, &mut None)?;
        let start = stepper.initial_state(g)?;
        decode(mode, start, v.bos(), v.eos(), self.config.max_description_len, |s: &Var, prev| {
            let (dist, next) = stepper.step(g, *s, prev, &mut None)?;
            Ok::<_, ModelError>((g.value(dist.p_final).to_vec(), next))
        })
    }

    /// Full inference. `template` overrides Stage 1's output when given.
    pub fn generate(&self, entity: &Entity, mode: DecodeMode, template: Option<&str>) -> Result<Generation> {
        let ex = self.example(entity, None)?;
        let mut g = Graph::new(&self.store);
        let enc = self.encode(&mut g, &ex)?;
        let template_tokens: Vec<String> = match template {
            Some(t) => {
                let toks = tokenize_template(t);
                if toks.is_empty() {
                    return Err(ModelError::EmptyTemplate);
                }
                toks
            }
            None => {
                let ids = self.generate_template_ids(&mut g, &enc, mode)?;
                let toks: Vec<String> = ids.iter().filter_map(|&i| self.vocabs.template.token(i)).map(str::to_string).collect();
                if toks.is_empty() {
                    vec![HEAD_SLOT.to_string()]
                } else {
                    toks
                }
            }
        };
        let template_ids = self.template_ids(&template_tokens);
        let ids = self.generate_description_ids(&mut g, &enc, &ex, &template_ids, mode)?;
        let description = ids.iter().map(|&i| ex.ext.word(&self.vocabs.target, i).unwrap_or_default().to_string()).collect();
        Ok(Generation { template: template_tokens, description })
    }
}

/// Splits a template string on whitespace; slots and function words are
/// kept as they are.
pub fn tokenize_template(template: &str) -> Vec<String> {
    tokenize(template)
}

pub(crate) fn stack_columns(g: &mut Graph, cols: &[Var]) -> Result<Var> {
    Ok(g.concat(cols, Axis::Cols)?)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::annotator::{Annotator, RuleAnnotator};
    use crate::corpus::{build_vocabs, Statement};
    use crate::lexicon::Lexicon;

    pub fn cazotte() -> Entity {
        let mut e = Entity::new(
            "Q1",
            "rue cazotte",
            "street in paris , france",
            vec![
                Statement::new("P31", "instance of", "street"),
                Statement::new("P17", "country", "france"),
                Statement::new("P131", "located in the administrative territorial entity", "paris"),
                Statement::new("P138", "named after", "jacques cazotte"),
                Statement::new("P281", "postal code", "75018"),
            ],
        );
        let ann = RuleAnnotator::new(Lexicon::english()).annotate(&e.description_tokens()).unwrap();
        e.template = Some(ann.template_string());
        e
    }

    pub fn tiny_config() -> ModelConfig {
        ModelConfig { hidden: 4, word_dim: 3, prop_dim: 2, pos_dim: 2, max_position: 4, init_scale: 0.5, ..ModelConfig::default() }
    }

    pub fn tiny_model(entities: &[Entity], seed: u64) -> Model {
        let vocabs = build_vocabs(entities, 100, 100, 4, &Lexicon::english()).unwrap();
        Model::new(tiny_config(), vocabs, seed).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::autograd::grad_check;

    #[test]
    fn template_tokenization_keeps_slots() {
        assert_eq!(tokenize_template("$hed$ in $mod$, $mod$"), vec!["$hed$", "in", "$mod$", ",", "$mod$"]);
    }

    #[test]
    fn example_ids() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 0);
        let ex = m.example(&e, None).unwrap();
        assert_eq!(ex.source.len(), 6);
        assert_eq!(ex.template_targets.len(), 6);
        assert_eq!(*ex.template_targets.last().unwrap(), m.vocabs.template.eos());
        assert_eq!(ex.description_targets.len(), 6);
        let street = m.vocabs.target.id("street");
        assert_eq!(ex.description_targets[0], street);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { hidden: 0, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn joint_loss_is_sum_of_parts() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 1);
        let ex = m.example(&e, None).unwrap();
        let mut g = Graph::new(&m.store);
        let l = m.joint_loss(&mut g, &ex, LossTerms::default(), None).unwrap();
        let (a, b) = (g.value(l.template.unwrap())[0], g.value(l.description.unwrap())[0]);
        assert_eq!(g.value(l.total)[0], a + b);
        assert!(a > 0.0 && b > 0.0);
    }

    #[test]
    fn joint_loss_gradients_match_finite_differences() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 2);
        let ex = m.example(&e, None).unwrap();
        let ids: Vec<ParamId> = m.store.ids().collect();
        let f = |g: &mut Graph| Ok(m.joint_loss(g, &ex, LossTerms::default(), None).map_err(|e| match e {
            ModelError::Graph(ge) => ge,
            other => panic!("{other}"),
        })?.total);
        let report = grad_check(f, &m.store, &ids, 1e-3).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn generation_respects_limits() {
        let e = cazotte();
        let mut m = tiny_model(std::slice::from_ref(&e), 3);
        m.config.max_template_len = 1;
        m.config.max_description_len = 1;
        let out = m.generate(&e, DecodeMode::Greedy, None).unwrap();
        assert!(out.template.len() == 1);
        assert!(out.description.len() <= 1);
        let forced = m.generate(&e, DecodeMode::Greedy, Some("$hed$ in $mod$")).unwrap();
        assert_eq!(forced.template, vec!["$hed$", "in", "$mod$"]);
        assert!(m.generate(&e, DecodeMode::Greedy, Some("  ")).is_err());
    }

    #[test]
    fn beam_one_matches_greedy_on_model() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 4);
        let a = m.generate(&e, DecodeMode::Greedy, None).unwrap();
        let b = m.generate(&e, DecodeMode::Beam(1), None).unwrap();
        assert_eq!(a, b);
    }
}
