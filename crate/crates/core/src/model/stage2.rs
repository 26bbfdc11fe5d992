//! Template encoder and description decoder with context gates and
//! conditional copy.

use std::collections::HashMap;

use super::{maybe_dropout, stack_columns, Dropout, EncoderOutput, Example, Gate, Model, ModelError, Network, Result};
use crate::autograd::{Axis, Graph, GraphError, Var};
use crate::corpus::Vocab;
use crate::layers::Memory;

/// Target vocabulary extended with the source words it lacks. Ids below
/// `base_len` are target-vocabulary ids; the rest index `oov`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedVocab {
    base_len: usize,
    unk: usize,
    oov: Vec<String>,
    oov_index: HashMap<String, usize>,
    /// Extended id of each source position.
    source_ids: Vec<usize>,
}

impl ExtendedVocab {
    pub fn new<S: AsRef<str>>(target: &Vocab, source_words: &[S]) -> Self {
        let mut oov = Vec::new();
        let mut oov_index = HashMap::new();
        let base_len = target.len();
        let source_ids = source_words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                target.get(w).unwrap_or_else(|| {
                    *oov_index.entry(w.to_string()).or_insert_with(|| {
                        oov.push(w.to_string());
                        base_len + oov.len() - 1
                    })
                })
            })
            .collect();
        Self { base_len, unk: target.unk(), oov, oov_index, source_ids }
    }

    pub fn len(&self) -> usize {
        self.base_len + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn oov_words(&self) -> &[String] {
        &self.oov
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    /// Extended id of `word`; words neither in the vocabulary nor in the
    /// source map to unk.
    pub fn id(&self, target: &Vocab, word: &str) -> usize {
        target.get(word).or_else(|| self.oov_index.get(word).copied()).unwrap_or(self.unk)
    }

    pub fn word<'a>(&'a self, target: &'a Vocab, id: usize) -> Option<&'a str> {
        if id < self.base_len {
            target.token(id)
        } else {
            self.oov.get(id - self.base_len).map(String::as_str)
        }
    }

    /// Id used to embed `id` as the next decoder input.
    pub fn input_id(&self, id: usize) -> usize {
        if id < self.base_len {
            id
        } else {
            self.unk
        }
    }
}

/// Bidirectional GRU over the template; each position's `[fwd; bwd]` is
/// projected back to the hidden size.
pub fn encode_template(net: &Network, g: &mut Graph, template: &[usize]) -> Result<Memory> {
    if template.is_empty() {
        return Err(ModelError::EmptyTemplate);
    }
    let table = g.param(net.template_emb);
    let embs = template.iter().map(|&t| g.embed(table, t)).collect::<std::result::Result<Vec<_>, _>>()?;
    let x = stack_columns(g, &embs)?;
    let rev: Vec<Var> = embs.iter().rev().copied().collect();
    let x_rev = stack_columns(g, &rev)?;
    let d = net.template_fwd.hidden;
    let h0 = g.zeros(d, 1);
    let fwd = net.template_fwd.run(g, x, h0)?;
    let mut bwd = net.template_bwd.run(g, x_rev, h0)?;
    bwd.reverse();
    let f = stack_columns(g, &fwd)?;
    let b = stack_columns(g, &bwd)?;
    let both = g.concat(&[f, b], Axis::Rows)?;
    let states = net.template_proj.forward(g, both)?;
    Ok(Memory::from_matrix(g, states))
}

#[derive(Debug, Clone, Copy)]
pub struct GateState {
    pub source: Var,
    pub template: Var,
}

fn gate(gate: &Gate, g: &mut Graph, e: Var, s_prev: Var, c: Var) -> Result<Var> {
    let a = gate.w.forward(g, e)?;
    let b = gate.u.forward(g, s_prev)?;
    let c = gate.c.forward(g, c)?;
    let sum = g.add(a, b)?;
    let sum = g.add(sum, c)?;
    Ok(g.sigmoid(sum))
}

/// `g^x = sigmoid(W e + U s + C c^x + b)` and the analogous `g^t`.
pub fn context_gates(net: &Network, g: &mut Graph, e: Var, s_prev: Var, cx: Var, ct: Var) -> Result<GateState> {
    Ok(GateState { source: gate(&net.gate_x, g, e, s_prev, cx)?, template: gate(&net.gate_t, g, e, s_prev, ct)? })
}

/// `c2 = (1 - g^x - g^t) * (W e + U s + b) + g^x * C1 c^x + g^t * C2 c^t`.
/// The first coefficient is used as is, negative values included.
pub fn fuse_contexts(net: &Network, g: &mut Graph, e: Var, s_prev: Var, cx: Var, ct: Var, gates: GateState) -> Result<Var> {
    let we = net.fuse_w.forward(g, e)?;
    let us = net.fuse_u.forward(g, s_prev)?;
    let target = g.add(we, us)?;
    let rest = g.one_minus(gates.source);
    let rest = g.sub(rest, gates.template)?;
    let target = g.mul(rest, target)?;
    let sx = net.fuse_cx.forward(g, cx)?;
    let sx = g.mul(gates.source, sx)?;
    let st = net.fuse_ct.forward(g, ct)?;
    let st = g.mul(gates.template, st)?;
    let out = g.add(target, sx)?;
    Ok(g.add(out, st)?)
}

/// Per-step output distributions.
#[derive(Debug, Clone, Copy)]
pub struct StepDistribution {
    /// Over the extended vocabulary.
    pub p_final: Var,
    /// Over the target vocabulary.
    pub p_gen: Var,
    /// Over source positions; `None` for an empty source.
    pub p_copy: Option<Var>,
    /// Probability of generating (`z = 1`).
    pub p_switch: Var,
    pub gates: GateState,
    pub source_attention: Var,
    pub template_attention: Var,
}

/// Copy keys `tanh(W_c h_i + b)` for every source state, stacked as rows.
pub fn copy_keys(net: &Network, g: &mut Graph, source: &Memory) -> Result<Var> {
    let k = net.copy.forward(g, source.states)?;
    let k = g.tanh(k);
    Ok(g.transpose(k))
}

/// Mixture of the generation softmax over the target vocabulary and the
/// copy softmax over source positions, mapped into the extended vocabulary.
/// `features` is `[s; c2]`.
pub fn copy_gen_distribution(
    net: &Network,
    g: &mut Graph,
    state: Var,
    features: Var,
    keys: Option<Var>,
    ext: &ExtendedVocab,
) -> Result<(Var, Var, Option<Var>, Var)> {
    let logits = net.generate.forward(g, features)?;
    let p_gen = g.softmax(logits, Axis::Rows);
    let hidden = net.switch_hidden.forward(g, features)?;
    let hidden = g.tanh(hidden);
    let z = net.switch_out.forward(g, hidden)?;
    let p_switch = g.sigmoid(z);

    let extra = ext.len() - ext.base_len();
    let gen_ext = if extra > 0 {
        let pad = g.zeros(extra, 1);
        g.concat(&[p_gen, pad], Axis::Rows)?
    } else {
        p_gen
    };
    let keys = match keys {
        Some(k) if !ext.source_ids().is_empty() => k,
        _ => return Ok((gen_ext, p_gen, None, p_switch)),
    };
    let scores = g.matmul(keys, state)?;
    let p_copy = g.softmax(scores, Axis::Rows);
    let copy_ext = g.scatter_add(p_copy, ext.source_ids(), ext.len())?;
    let a = g.scale_by(gen_ext, p_switch)?;
    let p_copy_mode = g.one_minus(p_switch);
    let b = g.scale_by(copy_ext, p_copy_mode)?;
    let p_final = g.add(a, b)?;
    Ok((p_final, p_gen, Some(p_copy), p_switch))
}

/// Description decoder bound to one example and template.
pub struct Stage2Step<'m> {
    model: &'m Model,
    source: Memory,
    final_state: Var,
    template: Memory,
    keys: Var,
    ext: ExtendedVocab,
}

impl<'m> Stage2Step<'m> {
    pub fn new(model: &'m Model, g: &mut Graph, enc: &EncoderOutput, template: &[usize], ex: &Example, _dropout: &mut Option<&mut Dropout>) -> Result<Self> {
        let len = model.vocabs.template.len();
        if let Some(&bad) = template.iter().find(|&&t| t >= len) {
            return Err(ModelError::UnknownToken { id: bad, len });
        }
        let tmem = encode_template(&model.net, g, template)?;
        let keys = copy_keys(&model.net, g, &enc.memory)?;
        Ok(Self { model, source: enc.memory, final_state: enc.final_state, template: tmem, keys, ext: ex.ext.clone() })
    }

    pub fn template_memory(&self) -> &Memory {
        &self.template
    }

    /// `s_0 = tanh(W h_last + b)` with its own parameters.
    pub fn initial_state(&self, g: &mut Graph) -> Result<Var> {
        let y = self.model.net.d_init.forward(g, self.final_state)?;
        Ok(g.tanh(y))
    }

    /// Consumes the previous extended id and returns the distributions for
    /// the next token plus the new state.
    pub fn step(&mut self, g: &mut Graph, s_prev: Var, prev: usize, dropout: &mut Option<&mut Dropout>) -> Result<(StepDistribution, Var)> {
        if prev >= self.ext.len() {
            return Err(ModelError::UnknownToken { id: prev, len: self.ext.len() });
        }
        let net = &self.model.net;
        let table = g.param(net.word_emb);
        let e = g.embed(table, self.ext.input_id(prev))?;
        let (cx, ax) = net.source_attention.attend(g, &self.source, s_prev)?;
        let (ct, at) = net.template_attention.attend(g, &self.template, s_prev)?;
        let gates = context_gates(net, g, e, s_prev, cx, ct)?;
        let c2 = fuse_contexts(net, g, e, s_prev, cx, ct, gates)?;
        let x = g.concat(&[e, c2], Axis::Rows)?;
        let s = net.d_decoder.step(g, x, s_prev)?;
        let feat = g.concat(&[s, c2], Axis::Rows)?;
        let feat = maybe_dropout(dropout, g, feat)?;
        let (p_final, p_gen, p_copy, p_switch) = copy_gen_distribution(net, g, s, feat, Some(self.keys), &self.ext)?;
        let dist = StepDistribution { p_final, p_gen, p_copy, p_switch, gates, source_attention: ax, template_attention: at };
        Ok((dist, s))
    }
}

/// `-sum_j log p(y_j | y_<j, infobox, template)` with teacher forcing.
pub fn description_loss(model: &Model, g: &mut Graph, enc: &EncoderOutput, template: &[usize], ex: &Example, dropout: &mut Option<&mut Dropout>) -> Result<Var> {
    let mut stepper = Stage2Step::new(model, g, enc, template, ex, dropout)?;
    let mut s = stepper.initial_state(g)?;
    let mut prev = model.vocabs.target.bos();
    let mut terms = Vec::with_capacity(ex.description_targets.len());
    for &t in &ex.description_targets {
        let (dist, next) = stepper.step(g, s, prev, dropout)?;
        terms.push(g.nll(dist.p_final, t)?);
        s = next;
        prev = t;
    }
    let all = g.concat(&terms, Axis::Rows).map_err(|e: GraphError| ModelError::from(e))?;
    Ok(g.sum(all))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::autograd::{grad_check, ParamId, ParamStore, Tensor};
    use crate::model::{stage1, ModelConfig};

    fn zeroed(m: &Model, ids: &[ParamId]) -> Model {
        let mut m = m.clone();
        for &id in ids {
            m.store.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        m
    }

    fn all_zero(m: &Model) -> Model {
        let ids: Vec<_> = m.store.ids().collect();
        zeroed(m, &ids)
    }

    #[test]
    fn extended_vocab_maps_oov_after_base() {
        let target = Vocab::from_tokens(["<pad>", "<unk>", "<bos>", "<eos>", "street", "paris"]);
        let ext = ExtendedVocab::new(&target, &["paris", "cazotte", "jacques", "cazotte"]);
        assert_eq!(ext.len(), 8);
        assert_eq!(ext.source_ids(), &[5, 6, 7, 6]);
        assert_eq!(ext.id(&target, "cazotte"), 6);
        assert_eq!(ext.id(&target, "street"), 4);
        assert_eq!(ext.id(&target, "nowhere"), 1);
        assert_eq!(ext.word(&target, 7), Some("jacques"));
        assert_eq!(ext.input_id(7), 1);
        assert_eq!(ext.input_id(5), 5);
    }

    #[test]
    fn template_encoder_shapes_and_zero_params() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 0);
        let mut g = Graph::new(&m.store);
        let mem = encode_template(&m.net, &mut g, &[4]).unwrap();
        assert_eq!(mem.len, 1);
        assert!(encode_template(&m.net, &mut g, &[]).is_err());
        let z = all_zero(&m);
        let mut g = Graph::new(&z.store);
        let mem = encode_template(&z.net, &mut g, &[4, 5, 6]).unwrap();
        assert_eq!(g.shape(mem.states), [4, 3]);
        assert!(g.value(mem.states).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tied_directions_mirror_on_a_palindrome() {
        let e = cazotte();
        let mut m = tiny_model(std::slice::from_ref(&e), 1);
        let net = m.net.clone();
        for (f, b) in [
            (net.template_fwd.w_x, net.template_bwd.w_x),
            (net.template_fwd.u_zr, net.template_bwd.u_zr),
            (net.template_fwd.u_h, net.template_bwd.u_h),
            (net.template_fwd.b, net.template_bwd.b),
        ] {
            let t = m.store.get(f).clone();
            *m.store.get_mut(b) = t;
        }
        // projection [A A]: symmetric in the two halves
        let h = m.config.hidden;
        let w = m.store.get_mut(net.template_proj.w);
        let data = w.data_mut();
        for r in 0..h {
            for c in 0..h {
                data[r * 2 * h + h + c] = data[r * 2 * h + c];
            }
        }
        let mut g = Graph::new(&m.store);
        let mem = encode_template(&m.net, &mut g, &[4, 6, 4]).unwrap();
        let col = |g: &mut Graph, j| {
            let v = g.col(mem.states, j).unwrap();
            g.value(v).to_vec()
        };
        let (first, last) = (col(&mut g, 0), col(&mut g, 2));
        for (a, b) in first.iter().zip(&last) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gates_at_zero_and_saturation() {
        let e = cazotte();
        let m = all_zero(&tiny_model(std::slice::from_ref(&e), 2));
        let mut g = Graph::new(&m.store);
        let v = g.column(vec![0.3, -0.2, 0.9]);
        let s = g.column(vec![0.1, 0.2, 0.3, 0.4]);
        let c = g.column(vec![1.0, -1.0, 0.5, 0.0]);
        let gs = context_gates(&m.net, &mut g, v, s, c, c).unwrap();
        assert!(g.value(gs.source).iter().all(|&x| x == 0.5));
        assert!(g.value(gs.template).iter().all(|&x| x == 0.5));
        let c2 = fuse_contexts(&m.net, &mut g, v, s, c, c, gs).unwrap();
        assert!(g.value(c2).iter().all(|&x| x == 0.0));

        let mut sat = m.clone();
        sat.store.get_mut(sat.net.gate_x.w.b.unwrap()).data_mut().iter_mut().for_each(|x| *x = 40.0);
        let mut g = Graph::new(&sat.store);
        let v = g.column(vec![0.3, -0.2, 0.9]);
        let s = g.column(vec![0.1, 0.2, 0.3, 0.4]);
        let gs = context_gates(&sat.net, &mut g, v, s, s, s).unwrap();
        assert!(g.value(gs.source).iter().all(|&x| x > 1.0 - 1e-12 && x <= 1.0));
    }

    /// Fusion evaluated by hand with the gates forced to constants.
    fn fusion_oracle(m: &Model, e: &[f64], s: &[f64], cx: &[f64], ct: &[f64], gx: f64, gt: f64) -> Vec<f64> {
        let mv = |id: ParamId, x: &[f64]| -> Vec<f64> {
            let t = m.store.get(id);
            (0..t.rows()).map(|r| (0..t.cols()).map(|c| t.get(r, c) * x[c]).sum()).collect()
        };
        let n = &m.net;
        let we = mv(n.fuse_w.w, e);
        let b = m.store.get(n.fuse_w.b.unwrap()).data();
        let us = mv(n.fuse_u.w, s);
        let c1 = mv(n.fuse_cx.w, cx);
        let c2 = mv(n.fuse_ct.w, ct);
        (0..we.len()).map(|i| (1.0 - gx - gt) * (we[i] + b[i] + us[i]) + gx * c1[i] + gt * c2[i]).collect()
    }

    #[test]
    fn fusion_limits() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 3);
        let (ev, sv, cxv, ctv) = (vec![0.3, -0.2, 0.9], vec![0.1, 0.2, -0.3, 0.4], vec![1.0, -1.0, 0.5, 0.0], vec![0.2, 0.7, -0.5, 0.3]);
        for (gx, gt) in [(0.0, 0.0), (1.0, 0.0), (0.3, 0.9)] {
            let mut g = Graph::new(&m.store);
            let (ev_, sv_, cx, ct) = (g.column(ev.clone()), g.column(sv.clone()), g.column(cxv.clone()), g.column(ctv.clone()));
            let gates = GateState { source: g.column(vec![gx; 4]), template: g.column(vec![gt; 4]) };
            let c2 = fuse_contexts(&m.net, &mut g, ev_, sv_, cx, ct, gates).unwrap();
            let oracle = fusion_oracle(&m, &ev, &sv, &cxv, &ctv, gx, gt);
            for (a, b) in g.value(c2).iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // (1, 0) keeps only C1 c^x; (1, 1) flips the sign of the target term
        let target = fusion_oracle(&m, &ev, &sv, &cxv, &ctv, 0.0, 0.0);
        let only_cx = fusion_oracle(&m, &ev, &sv, &cxv, &ctv, 1.0, 0.0);
        let c1 = fusion_oracle(&m, &[0.0; 3], &[0.0; 4], &cxv, &ctv, 1.0, 0.0);
        let both = fusion_oracle(&m, &ev, &sv, &cxv, &ctv, 1.0, 1.0);
        let c2 = fusion_oracle(&m, &[0.0; 3], &[0.0; 4], &cxv, &ctv, 0.0, 1.0);
        for i in 0..4 {
            assert!((only_cx[i] - c1[i]).abs() < 1e-12);
            assert!((both[i] - (-target[i] + c1[i] + c2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_source_word_sums_copy_mass() {
        // two source positions with the same word; generation switched off
        let target = Vocab::from_tokens(["<pad>", "<unk>", "<bos>", "<eos>", "street"]);
        let ext = ExtendedVocab::new(&target, &["paris", "paris"]);
        let mut store = ParamStore::new();
        let cfg = ModelConfig { hidden: 2, word_dim: 2, prop_dim: 1, pos_dim: 1, init_scale: 0.0, ..ModelConfig::default() };
        let vocabs = crate::corpus::VocabSet {
            value: target.clone(),
            property: target.clone(),
            position_count: 2,
            target: target.clone(),
            template: target.clone(),
        };
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let net = Network::new(&mut store, &cfg, &vocabs, &mut rng);
        store.get_mut(net.switch_out.b.unwrap()).data_mut()[0] = -60.0;
        store.get_mut(net.copy.w).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let mut g = Graph::new(&store);
        let h = g.constant(Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let mem = Memory::from_matrix(&mut g, h);
        let keys = copy_keys(&net, &mut g, &mem).unwrap();
        let s = g.column(vec![1.0, 0.0]);
        let feat = g.column(vec![1.0, 0.0, 0.0, 0.0]);
        let (p, _, p_copy, p_switch) = copy_gen_distribution(&net, &mut g, s, feat, Some(keys), &ext).unwrap();
        // scores tanh(1), 0 -> position masses sum into the single ext id
        let t = 1f64.tanh();
        let (a, b) = (t.exp() / (t.exp() + 1.0), 1.0 / (t.exp() + 1.0));
        let pc = g.value(p_copy.unwrap()).to_vec();
        assert!((pc[0] - a).abs() < 1e-12 && (pc[1] - b).abs() < 1e-12);
        let copy_share = 1.0 - g.value(p_switch)[0];
        let paris = ext.id(&target, "paris");
        assert!((g.value(p)[paris] - copy_share * (a + b)).abs() < 1e-12);
        assert!((g.value(p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_generation_equals_generation_softmax() {
        let e = cazotte();
        let mut m = tiny_model(std::slice::from_ref(&e), 4);
        m.store.get_mut(m.net.switch_out.b.unwrap()).data_mut()[0] = 1e3;
        let ex = m.example(&e, None).unwrap();
        let mut g = Graph::new(&m.store);
        let enc = stage1::encode_infobox(&m, &mut g, &ex.source, &mut None).unwrap();
        let tmpl = &ex.template_targets[..ex.template_targets.len() - 1];
        let mut st = Stage2Step::new(&m, &mut g, &enc, tmpl, &ex, &mut None).unwrap();
        let s0 = st.initial_state(&mut g).unwrap();
        let (d, _) = st.step(&mut g, s0, m.vocabs.target.bos(), &mut None).unwrap();
        let (pf, pg) = (g.value(d.p_final).to_vec(), g.value(d.p_gen).to_vec());
        for (i, p) in pf.iter().enumerate() {
            let expected = pg.get(i).copied().unwrap_or(0.0);
            assert!((p - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn oov_source_word_gets_mass_only_through_copy() {
        let e = cazotte();
        let mut m = tiny_model(std::slice::from_ref(&e), 5);
        m.vocabs.exclude_target_words(&["paris"]);
        let m = Model::new(m.config, m.vocabs.clone(), 5).unwrap();
        let ex = m.example(&e, None).unwrap();
        let paris = ex.ext.id(&m.vocabs.target, "paris");
        assert!(paris >= ex.ext.base_len());
        let mut g = Graph::new(&m.store);
        let enc = stage1::encode_infobox(&m, &mut g, &ex.source, &mut None).unwrap();
        let tmpl = &ex.template_targets[..ex.template_targets.len() - 1];
        let mut st = Stage2Step::new(&m, &mut g, &enc, tmpl, &ex, &mut None).unwrap();
        let s0 = st.initial_state(&mut g).unwrap();
        let (d, _) = st.step(&mut g, s0, m.vocabs.target.bos(), &mut None).unwrap();
        let copy_share = 1.0 - g.value(d.p_switch)[0];
        let pos_mass: f64 = ex.ext.source_ids().iter().zip(g.value(d.p_copy.unwrap())).filter(|(&i, _)| i == paris).map(|(_, p)| p).sum();
        assert!((g.value(d.p_final)[paris] - copy_share * pos_mass).abs() < 1e-12);
        assert_eq!(g.value(d.p_gen).len(), ex.ext.base_len());
        // teacher-forced target of an OOV description word that is copyable
        assert_eq!(ex.description_targets[2], paris);
    }

    #[test]
    fn gate_and_fusion_gradients() {
        let e = cazotte();
        let m = tiny_model(std::slice::from_ref(&e), 6);
        let ids: Vec<ParamId> = m
            .store
            .iter()
            .filter(|(_, n, _)| n.starts_with("desc.gate") || n.starts_with("desc.fuse"))
            .map(|(id, _, _)| id)
            .collect();
        let f = |g: &mut Graph| {
            let e = g.column(vec![0.3, -0.2, 0.9]);
            let s = g.column(vec![0.1, 0.2, -0.3, 0.4]);
            let cx = g.column(vec![1.0, -1.0, 0.5, 0.0]);
            let ct = g.column(vec![0.2, 0.7, -0.5, 0.3]);
            let gs = context_gates(&m.net, g, e, s, cx, ct).map_err(unwrap_graph)?;
            let c2 = fuse_contexts(&m.net, g, e, s, cx, ct, gs).map_err(unwrap_graph)?;
            let t = g.tanh(c2);
            Ok(g.sum(t))
        };
        let report = grad_check(f, &m.store, &ids, 1e-3).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    fn unwrap_graph(e: ModelError) -> GraphError {
        match e {
            ModelError::Graph(g) => g,
            other => panic!("{other}"),
        }
    }
}
