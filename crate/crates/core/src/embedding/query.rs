//! Query side of retrieval: turns the narration around a quote slot into the
//! vector that candidate clips are scored against.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vector::{check_dims, normalized};
use crate::error::{Error, Result};
use crate::text::metric_tokens;

/// Maps text to a fixed-width vector.
pub trait TextEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Vec<f64> {
        (**self).embed(text)
    }
}

/// Signed feature hashing of lowercase tokens, unit-normalized. Empty text
/// embeds to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // final avalanche so low bits depend on every byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

impl TextEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in metric_tokens(text) {
            let h = fnv1a(self.seed, tok.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        normalized(&v)
    }
}

/// Exact-text lookup with a fallback embedder for texts not in the table.
#[derive(Debug, Clone)]
pub struct LookupEmbedder<F> {
    table: HashMap<String, Vec<f64>>,
    fallback: F,
}

impl<F: TextEmbedder> LookupEmbedder<F> {
    pub fn new(table: HashMap<String, Vec<f64>>, fallback: F) -> Result<Self> {
        for v in table.values() {
            check_dims(fallback.dim(), v.len())?;
        }
        Ok(Self { table, fallback })
    }
}

impl<F: TextEmbedder> TextEmbedder for LookupEmbedder<F> {
    fn dim(&self) -> usize {
        self.fallback.dim()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        match self.table.get(text) {
            Some(v) => v.clone(),
            None if text.is_empty() => vec![0.0; self.dim()],
            None => self.fallback.embed(text),
        }
    }
}

/// Where the summary token sits relative to the context, which decides which
/// tokens survive truncation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumTokenPosition {
    /// Summary at the front: the budget is spent on the leading tokens of
    /// `prev ++ next`.
    Start,
    /// Summary at the end: `next` is kept from its start, `prev` fills the
    /// remaining budget from its end, so tokens nearest the slot survive.
    #[default]
    End,
}

fn keep(tokens: &[&str], range: std::ops::Range<usize>, original: &str) -> String {
    if range.start == 0 && range.end == tokens.len() {
        original.to_string()
    } else {
        tokens[range].join(" ")
    }
}

/// Truncates the narration pair to at most `max_tokens` whitespace tokens.
pub fn truncate_context(
    prev: &str,
    next: &str,
    max_tokens: usize,
    position: SumTokenPosition,
) -> (String, String) {
    let p: Vec<&str> = prev.split_whitespace().collect();
    let n: Vec<&str> = next.split_whitespace().collect();
    match position {
        SumTokenPosition::End => {
            let keep_next = n.len().min(max_tokens);
            let keep_prev = p.len().min(max_tokens - keep_next);
            (
                keep(&p, p.len() - keep_prev..p.len(), prev),
                keep(&n, 0..keep_next, next),
            )
        }
        SumTokenPosition::Start => {
            let keep_prev = p.len().min(max_tokens);
            let keep_next = n.len().min(max_tokens - keep_prev);
            (keep(&p, 0..keep_prev, prev), keep(&n, 0..keep_next, next))
        }
    }
}

/// Affine projection of `[embed(prev) ‖ embed(next)]` into the query space.
/// `w[i * out_dim + j]` connects feature `i` to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEncoder {
    pub text_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub max_context_tokens: usize,
    pub sum_position: SumTokenPosition,
}

pub const DEFAULT_MAX_CONTEXT_TOKENS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl QueryGrads {
    pub fn zeros_like(enc: &QueryEncoder) -> Self {
        Self {
            w: vec![0.0; enc.w.len()],
            b: vec![0.0; enc.b.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.w.iter().chain(&self.b).copied().collect()
    }
}

impl QueryEncoder {
    pub fn zeros(text_dim: usize, out_dim: usize) -> Self {
        Self {
            text_dim,
            out_dim,
            w: vec![0.0; 2 * text_dim * out_dim],
            b: vec![0.0; out_dim],
            max_context_tokens: DEFAULT_MAX_CONTEXT_TOKENS,
            sum_position: SumTokenPosition::End,
        }
    }

    pub fn init<R: Rng>(text_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut enc = Self::zeros(text_dim, out_dim);
        let a = 1.0 / ((2 * text_dim) as f64).sqrt();
        enc.params_mut().for_each(|w| *w = rng.random_range(-a..=a));
        enc
    }

    /// Projection that copies the `prev` embedding and adds the `next`
    /// embedding: `h = e(prev) + e(next)`. Needs `out_dim == text_dim`.
    pub fn sum_of_sides(text_dim: usize) -> Self {
        let mut enc = Self::zeros(text_dim, text_dim);
        for i in 0..text_dim {
            enc.w[i * text_dim + i] = 1.0;
            enc.w[(text_dim + i) * text_dim + i] = 1.0;
        }
        enc
    }

    pub fn with_context(
        mut self,
        max_context_tokens: usize,
        sum_position: SumTokenPosition,
    ) -> Self {
        self.max_context_tokens = max_context_tokens;
        self.sum_position = sum_position;
        self
    }

    pub fn check(&self) -> Result<()> {
        check_dims(2 * self.text_dim * self.out_dim, self.w.len())?;
        check_dims(self.out_dim, self.b.len())?;
        if self.max_context_tokens == 0 {
            return Err(Error::Config(
                "max_context_tokens must be at least 1".into(),
            ));
        }
        if self.params().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("query encoder parameters".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.b)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Encoder input for a narration pair after truncation. An empty side
    /// contributes zeros.
    pub fn features(
        &self,
        prev: &str,
        next: &str,
        embedder: &dyn TextEmbedder,
    ) -> Result<Vec<f64>> {
        if prev.trim().is_empty() && next.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        check_dims(self.text_dim, embedder.dim())?;
        let (prev, next) = truncate_context(prev, next, self.max_context_tokens, self.sum_position);
        let side = |t: &str| {
            if t.trim().is_empty() {
                Ok(vec![0.0; self.text_dim])
            } else {
                let v = embedder.embed(t);
                check_dims(self.text_dim, v.len()).map(|_| v)
            }
        };
        let mut x = side(&prev)?;
        x.extend(side(&next)?);
        Ok(x)
    }

    pub fn project(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_dims(2 * self.text_dim, features.len())?;
        let mut h = self.b.clone();
        for (i, x) in features.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = &self.w[i * self.out_dim..(i + 1) * self.out_dim];
            h.iter_mut().zip(row).for_each(|(o, w)| *o += x * w);
        }
        Ok(h)
    }

    /// Query vector `h` for the narration before and after a quote slot.
    pub fn encode(&self, prev: &str, next: &str, embedder: &dyn TextEmbedder) -> Result<Vec<f64>> {
        self.project(&self.features(prev, next, embedder)?)
    }

    pub fn backward(&self, features: &[f64], grad_h: &[f64], grads: &mut QueryGrads) {
        for (i, x) in features.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = &mut grads.w[i * self.out_dim..(i + 1) * self.out_dim];
            row.iter_mut().zip(grad_h).for_each(|(g, gh)| *g += x * gh);
        }
        grads.b.iter_mut().zip(grad_h).for_each(|(g, gh)| *g += gh);
    }
}
