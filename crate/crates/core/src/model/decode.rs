//! Greedy and beam search over a step function
//! `(state, previous token) -> (next-token distribution, next state)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    #[default]
    Greedy,
    /// Length-normalized beam search with the given width.
    Beam(usize),
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "greedy" {
            return Ok(Self::Greedy);
        }
        let width = s
            .strip_prefix("beam:")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| format!("invalid decode mode `{s}` (expected greedy or beam:<k>)"))?;
        Ok(Self::Beam(width))
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Greedy => f.write_str("greedy"),
            Self::Beam(k) => write!(f, "beam:{k}"),
        }
    }
}

/// Index of the first maximum.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Emits at most `max_len` tokens, stopping before `eos`.
pub fn greedy<S, E, F>(start: S, bos: usize, eos: usize, max_len: usize, mut step: F) -> Result<Vec<usize>, E>
where
    F: FnMut(&S, usize) -> Result<(Vec<f64>, S), E>,
{
    let mut out = Vec::new();
    let mut state = start;
    let mut prev = bos;
    for _ in 0..max_len {
        let (probs, next) = step(&state, prev)?;
        let tok = argmax(&probs);
        if tok == eos {
            break;
        }
        out.push(tok);
        state = next;
        prev = tok;
    }
    Ok(out)
}

struct Hypothesis<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
}

struct Candidate {
    log_prob: f64,
    prob: f64,
    beam: usize,
    token: usize,
}

fn normalized(log_prob: f64, len: usize) -> f64 {
    log_prob / len.max(1) as f64
}

/// Beam search; the winner maximizes total log-probability divided by
/// length (counting `eos` for finished hypotheses).
pub fn beam<S, E, F>(start: S, bos: usize, eos: usize, max_len: usize, width: usize, mut step: F) -> Result<Vec<usize>, E>
where
    S: Clone,
    F: FnMut(&S, usize) -> Result<(Vec<f64>, S), E>,
{
    let width = width.max(1);
    let mut alive = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, state: start }];
    // (tokens, log prob, length for normalization)
    let mut finished: Vec<(Vec<usize>, f64, usize)> = Vec::new();

    for _ in 0..max_len {
        let mut next_states = Vec::with_capacity(alive.len());
        let mut cands = Vec::new();
        for (b, hyp) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(bos);
            let (probs, next) = step(&hyp.state, prev)?;
            next_states.push(next);
            for (token, &prob) in probs.iter().enumerate() {
                if prob > 0.0 {
                    cands.push(Candidate { log_prob: hyp.log_prob + prob.ln(), prob, beam: b, token });
                }
            }
        }
        cands.sort_by(|a, b| {
            b.log_prob
                .total_cmp(&a.log_prob)
                .then_with(|| b.prob.total_cmp(&a.prob))
                .then_with(|| a.beam.cmp(&b.beam))
                .then_with(|| a.token.cmp(&b.token))
        });

        let mut survivors = Vec::with_capacity(width);
        for c in cands.into_iter().take(width) {
            let mut tokens = alive[c.beam].tokens.clone();
            if c.token == eos {
                let len = tokens.len() + 1;
                finished.push((tokens, c.log_prob, len));
            } else {
                tokens.push(c.token);
                survivors.push(Hypothesis { tokens, log_prob: c.log_prob, state: next_states[c.beam].clone() });
            }
        }
        alive = survivors;
        if alive.is_empty() || finished.len() >= width {
            break;
        }
    }

    let truncated = alive.into_iter().map(|h| {
        let len = h.tokens.len();
        (h.tokens, h.log_prob, len)
    });
    let pool: Vec<_> = if finished.is_empty() { truncated.collect() } else { finished };
    let best = pool
        .into_iter()
        .max_by(|a, b| normalized(a.1, a.2).partial_cmp(&normalized(b.1, b.2)).unwrap_or(Ordering::Equal).then(Ordering::Greater))
        .map(|(tokens, _, _)| tokens)
        .unwrap_or_default();
    Ok(best)
}

/// Dispatches on `mode`.
pub fn decode<S, E, F>(mode: DecodeMode, start: S, bos: usize, eos: usize, max_len: usize, step: F) -> Result<Vec<usize>, E>
where
    S: Clone,
    F: FnMut(&S, usize) -> Result<(Vec<f64>, S), E>,
{
    match mode {
        DecodeMode::Greedy => greedy(start, bos, eos, max_len, step),
        DecodeMode::Beam(k) => beam(start, bos, eos, max_len, k, step),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::convert::Infallible;

    /// Table-driven toy model: the distribution depends on (step, previous token).
    fn table_step(table: &[Vec<f64>], vocab: usize) -> impl FnMut(&usize, usize) -> Result<(Vec<f64>, usize), Infallible> + '_ {
        move |t: &usize, prev: usize| {
            let row = &table[(*t * vocab + prev) % table.len()];
            let z: f64 = row.iter().sum();
            Ok((row.iter().map(|x| x / z).collect(), t + 1))
        }
    }

    #[test]
    fn parses_modes() {
        assert_eq!("greedy".parse::<DecodeMode>().unwrap(), DecodeMode::Greedy);
        assert_eq!("beam:4".parse::<DecodeMode>().unwrap(), DecodeMode::Beam(4));
        assert!("beam:0".parse::<DecodeMode>().is_err());
        assert!("sample".parse::<DecodeMode>().is_err());
        assert_eq!(DecodeMode::Beam(3).to_string(), "beam:3");
    }

    #[test]
    fn greedy_respects_max_len_and_eos() {
        // token 2 always most likely, eos = 0
        let table = vec![vec![0.1, 0.2, 0.7]];
        let out = greedy(0usize, 1, 0, 1, table_step(&table, 3)).unwrap();
        assert_eq!(out, vec![2]);
        let out = greedy(0usize, 1, 0, 5, table_step(&table, 3)).unwrap();
        assert_eq!(out, vec![2; 5]);
        let eos_first = vec![vec![0.9, 0.05, 0.05]];
        assert!(greedy(0usize, 1, 0, 5, table_step(&eos_first, 3)).unwrap().is_empty());
    }

    #[test]
    fn beam_finds_better_sequence_than_greedy() {
        // eos = 0, bos = 3. step 0: token 1 (0.6) or token 2 (0.4).
        // after 1: flat; after 2: eos is certain.
        let step = |t: &Vec<usize>, prev: usize| -> Result<(Vec<f64>, Vec<usize>), Infallible> {
            let probs = match (t.len(), prev) {
                (0, _) => vec![0.0, 0.6, 0.4, 0.0],
                (_, 1) => vec![0.34, 0.33, 0.33, 0.0],
                (_, 2) => vec![1.0, 0.0, 0.0, 0.0],
                _ => vec![1.0, 0.0, 0.0, 0.0],
            };
            let mut next = t.clone();
            next.push(prev);
            Ok((probs, next))
        };
        assert_eq!(greedy(Vec::new(), 3, 0, 4, step).unwrap(), vec![1]);
        assert_eq!(beam(Vec::new(), 3, 0, 4, 2, step).unwrap(), vec![2]);
    }

    proptest! {
        #[test]
        fn beam_of_one_is_greedy(
            rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 5), 1..12),
            max_len in 1usize..8,
        ) {
            let g = greedy(0usize, 1, 0, max_len, table_step(&rows, 5)).unwrap();
            let b = beam(0usize, 1, 0, max_len, 1, table_step(&rows, 5)).unwrap();
            prop_assert_eq!(g.clone(), b);
            prop_assert!(g.len() <= max_len);
        }
    }
}
