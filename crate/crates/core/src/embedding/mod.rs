//! Vectors, the fusion head, the query encoder, retrieval losses and training.

pub mod fusion;
pub mod io;
pub mod loss;
pub mod model;
pub mod query;
pub mod train;
pub mod vector;

pub use fusion::FusionHead;
pub use loss::{
    grad_retrieval_loss, l2_retrieval_loss, retrieval_loss, total_loss, LossKind, RetrievalBatch,
};
pub use model::{ModelGrads, RetrievalModel, RetrievalVariant};
pub use query::{HashingEmbedder, LookupEmbedder, QueryEncoder, SumTokenPosition, TextEmbedder};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};
pub use vector::{cosine_similarity, EmbeddingVector};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Loss evaluated through the public forward path, independent of the
    /// backward pass.
    fn forward_loss(
        model: &RetrievalModel,
        inputs: &[Vec<f64>],
        batch: &RetrievalBatch,
        include_pos: bool,
    ) -> f64 {
        let emb: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| model.candidate_embedding(x).unwrap())
            .collect();
        let q: Vec<Vec<f64>> = batch
            .features
            .iter()
            .map(|x| model.encoder.project(x).unwrap())
            .collect();
        let p: Vec<Vec<f64>> = batch.positives.iter().map(|&i| emb[i].clone()).collect();
        let n: Vec<Vec<Vec<f64>>> = batch
            .negatives
            .iter()
            .map(|ns| ns.iter().map(|&i| emb[i].clone()).collect())
            .collect();
        retrieval_loss(&q, &p, &n, include_pos).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences_on_small_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = RetrievalModel::init(RetrievalVariant::Tv, 3, 4, 2, Some(5), &mut rng);
        let inputs: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 10)).collect();
        let batch = RetrievalBatch {
            features: (0..3).map(|_| rand_vec(&mut rng, 6)).collect(),
            positives: vec![0, 1, 2],
            negatives: vec![vec![3, 4], vec![5, 0, 3], vec![1]],
        };
        for include_pos in [false, true] {
            let (loss, grads) =
                grad_retrieval_loss(&model, &inputs, &batch, LossKind::Contrastive, include_pos)
                    .unwrap();
            assert!((loss - forward_loss(&model, &inputs, &batch, include_pos)).abs() < 1e-12);
            let analytic = grads.flatten();
            let step = 1e-5;
            for (i, &a) in analytic.iter().enumerate() {
                let mut plus = model.clone();
                *plus.params_mut()[i] += step;
                let mut minus = model.clone();
                *minus.params_mut()[i] -= step;
                let fd = (forward_loss(&plus, &inputs, &batch, include_pos)
                    - forward_loss(&minus, &inputs, &batch, include_pos))
                    / (2.0 * step);
                let denom = fd.abs().max(a.abs()).max(1e-6);
                assert!((fd - a).abs() / denom < 1e-4, "param {i}: fd {fd} vs {a}");
            }
        }
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = RetrievalModel::init(RetrievalVariant::Tv, 2, 3, 1, None, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 6)).collect();
        let batch = RetrievalBatch {
            features: (0..2).map(|_| rand_vec(&mut rng, 4)).collect(),
            positives: vec![0, 2],
            negatives: vec![vec![], vec![]],
        };
        let l2 = |m: &RetrievalModel| {
            let q: Vec<_> = batch
                .features
                .iter()
                .map(|x| m.encoder.project(x).unwrap())
                .collect();
            let p: Vec<_> = batch
                .positives
                .iter()
                .map(|&i| m.candidate_embedding(&inputs[i]).unwrap())
                .collect();
            l2_retrieval_loss(&q, &p).unwrap()
        };
        let (loss, grads) =
            grad_retrieval_loss(&model, &inputs, &batch, LossKind::L2, false).unwrap();
        assert!((loss - l2(&model)).abs() < 1e-12);
        for (i, g) in grads.flatten().into_iter().enumerate() {
            let mut plus = model.clone();
            *plus.params_mut()[i] += 1e-5;
            let mut minus = model.clone();
            *minus.params_mut()[i] -= 1e-5;
            let fd = (l2(&plus) - l2(&minus)) / 2e-5;
            assert!((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn gradient_vanishes_at_symmetric_minimum() {
        // h parallel to the positive, negatives ±n orthogonal to it
        let mut encoder = QueryEncoder::zeros(2, 3);
        encoder.b = vec![2.0, 0.0, 0.0];
        let model = RetrievalModel {
            variant: RetrievalVariant::T,
            encoder,
            head: None,
        };
        let inputs = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, -1.0, 0.0],
        ];
        let batch = RetrievalBatch {
            features: vec![vec![0.3, -0.1, 0.7, 0.2]],
            positives: vec![0],
            negatives: vec![vec![1, 2]],
        };
        let (_, grads) =
            grad_retrieval_loss(&model, &inputs, &batch, LossKind::Contrastive, false).unwrap();
        assert!(grads.flatten().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn scaling_negatives_leaves_gradients_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = RetrievalModel::init(RetrievalVariant::T, 3, 4, 0, None, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
        let batch = RetrievalBatch {
            features: vec![rand_vec(&mut rng, 6), rand_vec(&mut rng, 6)],
            positives: vec![0, 1],
            negatives: vec![vec![2, 3], vec![3, 4]],
        };
        let mut scaled = inputs.clone();
        for v in &mut scaled[2..] {
            v.iter_mut().for_each(|x| *x *= 7.5);
        }
        let (_, g1) =
            grad_retrieval_loss(&model, &inputs, &batch, LossKind::Contrastive, true).unwrap();
        let (_, g2) =
            grad_retrieval_loss(&model, &scaled, &batch, LossKind::Contrastive, true).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
