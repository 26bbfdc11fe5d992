//! Neural building blocks on top of [`crate::autograd`].

use rand::Rng;

use crate::autograd::{Axis, Graph, GraphError, ParamId, ParamStore, Var};

type Result<T> = std::result::Result<T, GraphError>;

/// `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool, scale: f64, rng: &mut R) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), output, input, scale, rng);
        let b = bias.then(|| store.add_uniform(&format!("{name}.b"), output, 1, scale, rng));
        Self { w, b }
    }

    /// Works on a single column or on a matrix of columns (bias broadcast).
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.matmul(w, x)?;
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
///
/// The three input maps are stored stacked as one `3d x in` matrix (rows z,
/// r, h) and `U_z`, `U_r` as one `2d x d` matrix.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub w_x: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w_x: store.add_uniform(&format!("{name}.w_x"), 3 * hidden, input, scale, rng),
            u_zr: store.add_uniform(&format!("{name}.u_zr"), 2 * hidden, hidden, scale, rng),
            u_h: store.add_uniform(&format!("{name}.u_h"), hidden, hidden, scale, rng),
            b: store.add_uniform(&format!("{name}.b"), 3 * hidden, 1, scale, rng),
            input,
            hidden,
        }
    }

    /// `W x + b` for one column or a matrix of input columns.
    pub fn project_input(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let [rows, _] = g.shape(x);
        if rows != self.input {
            return Err(GraphError::Shape { op: "gru input", left: g.shape(x), right: [self.input, 1] });
        }
        let w = g.param(self.w_x);
        let b = g.param(self.b);
        let y = g.matmul(w, x)?;
        g.add(y, b)
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        let gx = self.project_input(g, x)?;
        self.step_projected(g, gx, h)
    }

    /// One step given the precomputed input projection `W x + b` (3d x 1).
    pub fn step_projected(&self, g: &mut Graph, gx: Var, h: Var) -> Result<Var> {
        let d = self.hidden;
        if g.shape(h) != [d, 1] {
            return Err(GraphError::Shape { op: "gru state", left: g.shape(h), right: [d, 1] });
        }
        let u_zr = g.param(self.u_zr);
        let u_h = g.param(self.u_h);
        let gh = g.matmul(u_zr, h)?;

        let xz = g.slice_rows(gx, 0, d)?;
        let hz = g.slice_rows(gh, 0, d)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);

        let xr = g.slice_rows(gx, d, d)?;
        let hr = g.slice_rows(gh, d, d)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);

        let rh = g.mul(r, h)?;
        let uh = g.matmul(u_h, rh)?;
        let xh = g.slice_rows(gx, 2 * d, d)?;
        let cand = g.add(xh, uh)?;
        let cand = g.tanh(cand);

        // h + z * (cand - h)
        let delta = g.sub(cand, h)?;
        let step = g.mul(z, delta)?;
        g.add(h, step)
    }

    /// Runs over the columns of `inputs` (in x L) starting from `h0`.
    pub fn run(&self, g: &mut Graph, inputs: Var, h0: Var) -> Result<Vec<Var>> {
        let len = g.shape(inputs)[1];
        let projected = self.project_input(g, inputs)?;
        let mut h = h0;
        let mut states = Vec::with_capacity(len);
        for j in 0..len {
            let gx = g.col(projected, j)?;
            h = self.step_projected(g, gx, h)?;
            states.push(h);
        }
        Ok(states)
    }
}

/// Attention memory: the states stacked as columns (d x L) and their
/// transpose, computed once per sequence.
#[derive(Debug, Clone, Copy)]
pub struct Memory {
    pub states: Var,
    pub states_t: Var,
    pub len: usize,
}

impl Memory {
    pub fn new(g: &mut Graph, states: &[Var]) -> Result<Self> {
        let m = g.concat(states, Axis::Cols)?;
        let mt = g.transpose(m);
        Ok(Self { states: m, states_t: mt, len: states.len() })
    }

    /// Wraps an existing `d x L` matrix of states.
    pub fn from_matrix(g: &mut Graph, states: Var) -> Self {
        let len = g.shape(states)[1];
        let states_t = g.transpose(states);
        Self { states, states_t, len }
    }
}

/// General-product attention: `score_i = h_i^T W s`, `alpha = softmax(score)`,
/// `c = sum_i alpha_i h_i`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralAttention {
    pub w: ParamId,
}

impl GeneralAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, scale: f64, rng: &mut R) -> Self {
        Self { w: store.add_uniform(&format!("{name}.w"), dim, dim, scale, rng) }
    }

    /// Returns `(context, weights)`.
    pub fn attend(&self, g: &mut Graph, memory: &Memory, query: Var) -> Result<(Var, Var)> {
        let w = g.param(self.w);
        let ws = g.matmul(w, query)?;
        let scores = g.matmul(memory.states_t, ws)?;
        let alpha = g.softmax(scores, Axis::Rows);
        let context = g.matmul(memory.states, alpha)?;
        Ok((context, alpha))
    }
}
