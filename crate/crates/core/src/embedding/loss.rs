//! Retrieval objectives and their analytic gradients.
//!
//! The contrastive objective, per quote slot `k` with query `h_k`, positive
//! `e*_k` and negative set `C_k`:
//!
//! ```text
//! l_k = log Σ_{e_j ∈ D_k} exp(cos(h_k, e_j)) − cos(h_k, e*_k)
//! ```
//!
//! where `D_k = C_k` by default, or `C_k ∪ {e*_k}` in the usual InfoNCE form.
//! Similarities enter the softmax raw, with no temperature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fusion::{FusionGrads, FusionTrace};
use super::model::{ModelGrads, RetrievalModel};
use super::query::QueryGrads;
use super::vector::{check_dims, cosine_similarity, cosine_with_grads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Contrastive,
    L2,
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_aligned(queries: usize, positives: usize, negatives: Option<usize>) -> Result<()> {
    if queries != positives || negatives.is_some_and(|n| n != queries) {
        return Err(Error::Misaligned(format!(
            "{queries} queries, {positives} positives, {} negative sets",
            negatives.map_or("n/a".to_string(), |n| n.to_string())
        )));
    }
    Ok(())
}

/// Contrastive loss for one slot from its similarity scores. Returns the loss
/// and dl/d(score) for the positive and each negative.
fn slot_loss(pos: f64, negs: &[f64], include_pos: bool) -> (f64, f64, Vec<f64>) {
    let mut scores = negs.to_vec();
    if include_pos {
        scores.push(pos);
    }
    let lse = log_sum_exp(&scores);
    let d_neg: Vec<f64> = negs.iter().map(|s| (s - lse).exp()).collect();
    let mut d_pos = -1.0;
    if include_pos {
        d_pos += (pos - lse).exp();
    }
    (lse - pos, d_pos, d_neg)
}

/// Summed contrastive retrieval loss over a batch of quote slots.
pub fn retrieval_loss(
    queries: &[Vec<f64>],
    positives: &[Vec<f64>],
    negative_sets: &[Vec<Vec<f64>>],
    include_pos: bool,
) -> Result<f64> {
    check_aligned(queries.len(), positives.len(), Some(negative_sets.len()))?;
    let mut total = 0.0;
    for (k, ((h, pos), negs)) in queries.iter().zip(positives).zip(negative_sets).enumerate() {
        if negs.is_empty() {
            return Err(Error::EmptyNegatives(k));
        }
        let s_pos = cosine_similarity(h, pos)?;
        let s_neg = negs
            .iter()
            .map(|e| cosine_similarity(h, e))
            .collect::<Result<Vec<_>>>()?;
        total += slot_loss(s_pos, &s_neg, include_pos).0;
    }
    Ok(total)
}

/// `Σ_k ‖h_k − e*_k‖²`
pub fn l2_retrieval_loss(queries: &[Vec<f64>], positives: &[Vec<f64>]) -> Result<f64> {
    check_aligned(queries.len(), positives.len(), None)?;
    let mut total = 0.0;
    for (h, e) in queries.iter().zip(positives) {
        check_dims(h.len(), e.len())?;
        total += h.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// `l_gen + alpha · l_ret`; with `alpha == 0` the result is `l_gen` exactly.
pub fn total_loss(l_gen: f64, l_ret: f64, alpha: f64) -> Result<f64> {
    if !l_gen.is_finite() || !l_ret.is_finite() || !alpha.is_finite() {
        return Err(Error::NonFinite("loss terms".into()));
    }
    if alpha == 0.0 {
        return Ok(l_gen);
    }
    Ok(l_gen + alpha * l_ret)
}

/// A batch of quote slots expressed against a shared table of clip inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalBatch {
    /// Encoder input per slot (see [`super::QueryEncoder::features`]).
    pub features: Vec<Vec<f64>>,
    /// Index of each slot's positive clip in the clip table.
    pub positives: Vec<usize>,
    /// Indices of each slot's negatives in the clip table.
    pub negatives: Vec<Vec<usize>>,
}

impl RetrievalBatch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

enum ClipForward {
    Text(Vec<f64>),
    Fused(FusionTrace),
}

impl ClipForward {
    fn embedding(&self) -> &[f64] {
        match self {
            ClipForward::Text(v) => v,
            ClipForward::Fused(t) => &t.output,
        }
    }
}

/// Loss of `batch` under `model` together with exact gradients for every
/// trainable parameter: the query encoder always, the fusion head for the
/// text+visual variant.
pub fn grad_retrieval_loss(
    model: &RetrievalModel,
    clip_inputs: &[Vec<f64>],
    batch: &RetrievalBatch,
    kind: LossKind,
    include_pos: bool,
) -> Result<(f64, ModelGrads)> {
    check_aligned(
        batch.features.len(),
        batch.positives.len(),
        Some(batch.negatives.len()),
    )?;
    let queries = batch
        .features
        .iter()
        .map(|x| model.encoder.project(x))
        .collect::<Result<Vec<_>>>()?;

    let mut used: BTreeMap<usize, ClipForward> = BTreeMap::new();
    let lookups = batch
        .positives
        .iter()
        .chain(batch.negatives.iter().flatten());
    for &c in lookups {
        if used.contains_key(&c) {
            continue;
        }
        let input = clip_inputs
            .get(c)
            .ok_or_else(|| Error::MissingClip(format!("#{c}")))?;
        let fwd = match &model.head {
            Some(head) => ClipForward::Fused(head.forward_trace(input)?),
            None => ClipForward::Text(input.clone()),
        };
        used.insert(c, fwd);
    }

    let mut d_queries: Vec<Vec<f64>> = queries.iter().map(|h| vec![0.0; h.len()]).collect();
    let mut d_clips: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    fn add(map: &mut BTreeMap<usize, Vec<f64>>, c: usize, g: &[f64], scale: f64) {
        let slot = map.entry(c).or_insert_with(|| vec![0.0; g.len()]);
        slot.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
    }

    let mut loss = 0.0;
    for k in 0..batch.len() {
        let h = &queries[k];
        let pos = batch.positives[k];
        let e_pos = used[&pos].embedding();
        match kind {
            LossKind::Contrastive => {
                let negs = &batch.negatives[k];
                if negs.is_empty() {
                    return Err(Error::EmptyNegatives(k));
                }
                let (s_pos, dh_pos, de_pos) = cosine_with_grads(h, e_pos)?;
                let mut s_neg = Vec::with_capacity(negs.len());
                let mut neg_grads = Vec::with_capacity(negs.len());
                for &c in negs {
                    let (s, dh, de) = cosine_with_grads(h, used[&c].embedding())?;
                    s_neg.push(s);
                    neg_grads.push((dh, de));
                }
                let (l, g_pos, g_neg) = slot_loss(s_pos, &s_neg, include_pos);
                loss += l;
                d_queries[k]
                    .iter_mut()
                    .zip(&dh_pos)
                    .for_each(|(a, b)| *a += g_pos * b);
                add(&mut d_clips, pos, &de_pos, g_pos);
                for ((&c, (dh, de)), g) in negs.iter().zip(&neg_grads).zip(&g_neg) {
                    d_queries[k]
                        .iter_mut()
                        .zip(dh)
                        .for_each(|(a, b)| *a += g * b);
                    add(&mut d_clips, c, de, *g);
                }
            }
            LossKind::L2 => {
                check_dims(h.len(), e_pos.len())?;
                let diff: Vec<f64> = h.iter().zip(e_pos).map(|(a, b)| a - b).collect();
                loss += diff.iter().map(|d| d * d).sum::<f64>();
                d_queries[k]
                    .iter_mut()
                    .zip(&diff)
                    .for_each(|(a, d)| *a += 2.0 * d);
                add(&mut d_clips, pos, &diff, -2.0);
            }
        }
    }

    let mut grads = ModelGrads {
        encoder: QueryGrads::zeros_like(&model.encoder),
        head: model.head.as_ref().map(FusionGrads::zeros_like),
    };
    for (x, dh) in batch.features.iter().zip(&d_queries) {
        model.encoder.backward(x, dh, &mut grads.encoder);
    }
    if let (Some(head), Some(hg)) = (&model.head, grads.head.as_mut()) {
        for (c, de) in &d_clips {
            if let ClipForward::Fused(trace) = &used[c] {
                head.backward(trace, de, hg);
            }
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Term-by-term evaluation without log-sum-exp.
    fn naive_loss(q: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<Vec<f64>>], include_pos: bool) -> f64 {
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for k in 0..q.len() {
            let num = cos(&q[k], &p[k]).exp();
            let mut den = 0.0;
            for e in &n[k] {
                den += cos(&q[k], e).exp();
            }
            if include_pos {
                den += num;
            }
            total += -(num / den).ln();
        }
        total
    }

    #[test]
    fn equal_scores_cancel() {
        let l = retrieval_loss(
            &[vec![1.0, 0.0]],
            &[vec![1.0, 1.0]],
            &[vec![vec![1.0, -1.0]]],
            false,
        )
        .unwrap();
        assert!(l.abs() < 1e-15);
    }

    #[test]
    fn two_orthogonal_negatives_give_ln2() {
        let h = vec![1.0, 0.0, 0.0];
        let l = retrieval_loss(
            &[h],
            &[vec![0.0, 1.0, 0.0]],
            &[vec![vec![0.0, 0.0, 1.0], vec![0.0, -1.0, 0.0]]],
            false,
        )
        .unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for include_pos in [false, true] {
            let q: Vec<_> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
            let p: Vec<_> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
            let n: Vec<Vec<_>> = (0..3)
                .map(|k| (0..k + 2).map(|_| rand_vec(&mut rng, 4)).collect())
                .collect();
            let fast = retrieval_loss(&q, &p, &n, include_pos).unwrap();
            assert!((fast - naive_loss(&q, &p, &n, include_pos)).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_errors() {
        assert!(matches!(
            retrieval_loss(&[vec![1.0]], &[vec![1.0]], &[vec![]], false),
            Err(Error::EmptyNegatives(0))
        ));
        assert!(matches!(
            retrieval_loss(&[vec![1.0]], &[vec![1.0, 0.0]], &[vec![vec![1.0]]], false),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(retrieval_loss(&[vec![1.0]], &[], &[], false).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(
            l2_retrieval_loss(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(),
            0.0
        );
        assert_eq!(
            l2_retrieval_loss(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(),
            25.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<_> = (0..5).map(|_| rand_vec(&mut rng, 6)).collect();
        let p: Vec<_> = (0..5).map(|_| rand_vec(&mut rng, 6)).collect();
        let mut oracle = 0.0;
        for k in 0..5 {
            for i in 0..6 {
                oracle += (q[k][i] - p[k][i]).powi(2);
            }
        }
        assert!((l2_retrieval_loss(&q, &p).unwrap() - oracle).abs() < 1e-12);
        assert!(l2_retrieval_loss(&[vec![1.0]], &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 2.0, 1.0).unwrap(), 2.0);
        assert_eq!(total_loss(1.0, 2.0, 0.5).unwrap(), 2.0);
        assert_eq!(total_loss(0.7, 123.4, 0.0).unwrap(), 0.7);
        assert!(total_loss(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn stable_path_matches_naive_exponentiation() {
        let values = [0.3, -0.2, 0.9, 0.0];
        let naive = values.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&values) - naive).abs() < 1e-12);
    }
}
