//! Group-aware negative sampling.
//!
//! Clips from the positive's own documentary are the hard negatives: for each
//! sample, `⌈fraction · n_neg⌉` of them are drawn (fewer if the documentary
//! does not have that many), and the rest of the `n_neg` negatives come from
//! other documentaries. Only when the other documentaries run out too is the
//! remainder topped up with further same-documentary clips.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// `⌈fraction · n⌉`, robust to products like `0.3 · 10` landing a hair above
/// an integer.
pub fn same_doc_target(fraction: f64, n_neg: usize) -> usize {
    let x = fraction * n_neg as f64;
    let r = x.round();
    let t = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (t.max(0.0) as usize).min(n_neg)
}

/// One sample's negatives, as indices into the sampler's clip table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeDraw {
    pub indices: Vec<usize>,
    /// How many of `indices` share the positive's documentary.
    pub same_doc: usize,
}

/// Clip table grouped by documentary.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    doc_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    others: Vec<Vec<usize>>,
}

impl NegativeSampler {
    /// `doc_ids[i]` is the documentary of clip `i`.
    pub fn new<S: AsRef<str>>(doc_ids: &[S]) -> Self {
        let mut doc_index: HashMap<&str, usize> = HashMap::new();
        let mut doc_of = Vec::with_capacity(doc_ids.len());
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, d) in doc_ids.iter().enumerate() {
            let next = doc_index.len();
            let di = *doc_index.entry(d.as_ref()).or_insert(next);
            if di == members.len() {
                members.push(Vec::new());
            }
            members[di].push(i);
            doc_of.push(di);
        }
        let others = (0..members.len())
            .map(|di| (0..doc_of.len()).filter(|&i| doc_of[i] != di).collect())
            .collect();
        Self {
            doc_of,
            members,
            others,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_of.is_empty()
    }

    /// Number of same-documentary clips available as negatives for `positive`.
    pub fn same_doc_supply(&self, positive: usize) -> usize {
        self.members[self.doc_of[positive]].len() - 1
    }

    pub fn draw<R: Rng>(
        &self,
        positive: usize,
        fraction: f64,
        n_neg: usize,
        rng: &mut R,
    ) -> Result<NegativeDraw> {
        if n_neg == 0 {
            return Err(Error::Config(
                "number of negatives must be at least 1".into(),
            ));
        }
        if self.len() < n_neg + 1 {
            return Err(Error::PoolTooSmall {
                available: self.len(),
                requested: n_neg,
            });
        }
        let di = self.doc_of[positive];
        let same: Vec<usize> = self.members[di]
            .iter()
            .copied()
            .filter(|&i| i != positive)
            .collect();
        let cross = &self.others[di];

        let n_same = same_doc_target(fraction, n_neg).min(same.len());
        let n_cross = (n_neg - n_same).min(cross.len());
        let n_topup = n_neg - n_same - n_cross;

        // draw the full same-doc quota plus any top-up in one permutation so
        // the top-up never repeats a clip
        let same_order = index::sample(rng, same.len(), n_same + n_topup);
        let mut indices: Vec<usize> = same_order.iter().take(n_same).map(|i| same[i]).collect();
        indices.extend(
            index::sample(rng, cross.len(), n_cross)
                .iter()
                .map(|i| cross[i]),
        );
        indices.extend(same_order.iter().skip(n_same).map(|i| same[i]));
        Ok(NegativeDraw {
            indices,
            same_doc: n_same + n_topup,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn docs(sizes: &[usize]) -> Vec<String> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(d, &n)| std::iter::repeat_n(format!("d{d}"), n))
            .collect()
    }

    #[test]
    fn ceiling_rule() {
        assert_eq!(same_doc_target(0.3, 10), 3);
        assert_eq!(same_doc_target(0.3, 63), 19);
        assert_eq!(same_doc_target(1.0, 5), 5);
        assert_eq!(same_doc_target(0.0, 5), 0);
        assert_eq!(same_doc_target(0.01, 5), 1);
    }

    #[test]
    fn all_same_doc_when_supply_allows() {
        let s = NegativeSampler::new(&docs(&[10, 10]));
        let d = s
            .draw(0, 1.0, 5, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(d.same_doc, 5);
        assert!(d.indices.iter().all(|&i| i < 10 && i != 0));
    }

    #[test]
    fn cross_doc_fallback() {
        let s = NegativeSampler::new(&docs(&[3, 10]));
        let d = s
            .draw(0, 1.0, 5, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(d.same_doc, 2);
        assert_eq!(d.indices.iter().filter(|&&i| i >= 3).count(), 3);
    }

    #[test]
    fn fraction_quota() {
        let s = NegativeSampler::new(&docs(&[20, 20]));
        let d = s
            .draw(5, 0.3, 10, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(d.indices.iter().filter(|&&i| i < 20).count(), 3);
        assert_eq!(d.indices.len(), 10);
    }

    #[test]
    fn single_documentary_tops_up_from_itself() {
        let s = NegativeSampler::new(&docs(&[12]));
        let d = s
            .draw(0, 0.3, 10, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(d.indices.len(), 10);
        let mut u = d.indices.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 10);
        assert!(!d.indices.contains(&0));
    }

    #[test]
    fn pool_too_small() {
        let s = NegativeSampler::new(&docs(&[3]));
        assert!(matches!(
            s.draw(0, 0.5, 3, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::PoolTooSmall { .. })
        ));
    }
}
