//! Infobox encoder and template decoder.

use super::{maybe_dropout, stack_columns, Dropout, Model, ModelError, Result, SourceIds};
use crate::autograd::{Axis, Graph, GraphError, Var};
use crate::layers::Memory;

/// Encoder states `H_x`, shared by both stages.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub states: Vec<Var>,
    pub memory: Memory,
    pub final_state: Var,
}

/// Embeds each token as `[word; property; position]` and runs a
/// unidirectional GRU over the sequence.
pub fn encode_infobox(model: &Model, g: &mut Graph, source: &[SourceIds], dropout: &mut Option<&mut Dropout>) -> Result<EncoderOutput> {
    if source.is_empty() {
        return Err(GraphError::Empty("source tokens").into());
    }
    let net = &model.net;
    let (ve, pe, qe) = (g.param(net.value_emb), g.param(net.prop_emb), g.param(net.pos_emb));
    let mut cols = Vec::with_capacity(source.len());
    for tok in source {
        let w = g.embed(ve, tok.word)?;
        let p = g.embed(pe, tok.property)?;
        let q = g.embed(qe, tok.position)?;
        cols.push(g.concat(&[w, p, q], Axis::Rows)?);
    }
    let x = stack_columns(g, &cols)?;
    let x = maybe_dropout(dropout, g, x)?;
    let h0 = g.zeros(model.config.hidden, 1);
    let states = net.encoder.run(g, x, h0)?;
    let memory = Memory::new(g, &states)?;
    let final_state = *states.last().expect("non-empty source");
    Ok(EncoderOutput { states, memory, final_state })
}

/// `s_0 = tanh(W h_last + b)`.
pub fn initial_state(model: &Model, g: &mut Graph, enc: &EncoderOutput) -> Result<Var> {
    let y = model.net.t_init.forward(g, enc.final_state)?;
    Ok(g.tanh(y))
}

/// One template-decoder step.
#[derive(Debug, Clone, Copy)]
pub struct Stage1Output {
    pub logits: Var,
    pub state: Var,
    pub attention: Var,
}

pub struct Stage1Step<'m> {
    model: &'m Model,
    memory: Memory,
}

impl<'m> Stage1Step<'m> {
    pub fn new(model: &'m Model, enc: &EncoderOutput) -> Self {
        Self { model, memory: enc.memory }
    }

    pub fn forward(&self, g: &mut Graph, s_prev: Var, prev: usize, dropout: &mut Option<&mut Dropout>) -> Result<Stage1Output> {
        let len = self.model.vocabs.template.len();
        if prev >= len {
            return Err(ModelError::UnknownToken { id: prev, len });
        }
        let net = &self.model.net;
        let (c, attention) = net.t_attention.attend(g, &self.memory, s_prev)?;
        let table = g.param(net.template_emb);
        let e = g.embed(table, prev)?;
        let x = g.concat(&[e, c], Axis::Rows)?;
        let state = net.t_decoder.step(g, x, s_prev)?;
        let feat = g.concat(&[state, c], Axis::Rows)?;
        let feat = maybe_dropout(dropout, g, feat)?;
        let logits = net.t_output.forward(g, feat)?;
        Ok(Stage1Output { logits, state, attention })
    }

    /// Distribution over the template vocabulary and the next state.
    pub fn step(&mut self, g: &mut Graph, s_prev: Var, prev: usize) -> Result<(Var, Var)> {
        let out = self.forward(g, s_prev, prev, &mut None)?;
        Ok((g.softmax(out.logits, Axis::Rows), out.state))
    }
}

/// `-sum_j log p(t_j | t_<j, infobox)` with teacher forcing from `bos`.
pub fn template_loss(model: &Model, g: &mut Graph, enc: &EncoderOutput, targets: &[usize], dropout: &mut Option<&mut Dropout>) -> Result<Var> {
    let stepper = Stage1Step::new(model, enc);
    let mut s = initial_state(model, g, enc)?;
    let mut prev = model.vocabs.template.bos();
    let mut terms = Vec::with_capacity(targets.len());
    for &t in targets {
        let out = stepper.forward(g, s, prev, dropout)?;
        terms.push(g.cross_entropy(out.logits, t)?);
        s = out.state;
        prev = t;
    }
    let all = g.concat(&terms, Axis::Rows)?;
    Ok(g.sum(all))
}
