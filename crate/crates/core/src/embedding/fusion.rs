//! Two-layer perceptron that fuses a clip's text embedding with the
//! embeddings of three of its frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vector::check_dims;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity used by every fusion head.
pub const ACTIVATION: &str = "tanh";

/// Weights are stored input-major: `w1[i * hidden + j]` connects input `i`
/// to hidden unit `j`, and likewise for `w2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionHead {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FusionGrads {
    pub fn zeros_like(head: &FusionHead) -> Self {
        Self {
            w1: vec![0.0; head.w1.len()],
            b1: vec![0.0; head.b1.len()],
            w2: vec![0.0; head.w2.len()],
            b2: vec![0.0; head.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

impl FusionHead {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden,
            out_dim,
            w1: vec![0.0; in_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * out_dim],
            b2: vec![0.0; out_dim],
        }
    }

    /// Uniform initialization in ±1/√fan_in for each layer.
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut head = Self::zeros(in_dim, hidden, out_dim);
        let a1 = 1.0 / (in_dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        head.w1
            .iter_mut()
            .chain(head.b1.iter_mut())
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        head.w2
            .iter_mut()
            .chain(head.b2.iter_mut())
            .for_each(|w| *w = rng.random_range(-a2..=a2));
        head
    }

    /// Input width for a text embedding of `text_dim` and three frames of `frame_dim`.
    pub fn tv_in_dim(text_dim: usize, frame_dim: usize) -> usize {
        text_dim + 3 * frame_dim
    }

    pub fn check(&self) -> Result<()> {
        check_dims(self.in_dim * self.hidden, self.w1.len())?;
        check_dims(self.hidden, self.b1.len())?;
        check_dims(self.hidden * self.out_dim, self.w2.len())?;
        check_dims(self.out_dim, self.b2.len())?;
        if self.params().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("fusion head parameters".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<FusionTrace> {
        check_dims(self.in_dim, input.len())?;
        let mut hidden = self.b1.clone();
        for (i, x) in input.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            hidden.iter_mut().zip(row).for_each(|(h, w)| *h += x * w);
        }
        hidden.iter_mut().for_each(|h| *h = h.tanh());
        let mut output = self.b2.clone();
        for (j, a) in hidden.iter().enumerate() {
            let row = &self.w2[j * self.out_dim..(j + 1) * self.out_dim];
            output.iter_mut().zip(row).for_each(|(o, w)| *o += a * w);
        }
        Ok(FusionTrace {
            input: input.to_vec(),
            hidden,
            output,
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.output)
    }

    /// Fuses a text embedding with three frame embeddings, concatenated in
    /// the order text, frame 1, frame 2, frame 3.
    pub fn fuse(&self, text: &[f64], frames: &[Vec<f64>; 3]) -> Result<Vec<f64>> {
        self.check()?;
        let frame_dim = frames[0].len();
        for f in &frames[1..] {
            check_dims(frame_dim, f.len())?;
        }
        check_dims(self.in_dim, text.len() + 3 * frame_dim)?;
        let input = tv_input(text, frames);
        self.forward(&input)
    }

    /// Accumulates parameter gradients given dL/d(output).
    pub fn backward(&self, trace: &FusionTrace, grad_out: &[f64], grads: &mut FusionGrads) {
        let mut grad_pre = vec![0.0; self.hidden];
        for (j, a) in trace.hidden.iter().enumerate() {
            let row = &self.w2[j * self.out_dim..(j + 1) * self.out_dim];
            let grow = &mut grads.w2[j * self.out_dim..(j + 1) * self.out_dim];
            let mut back = 0.0;
            for ((g, w), go) in grow.iter_mut().zip(row).zip(grad_out) {
                *g += a * go;
                back += w * go;
            }
            grad_pre[j] = back * (1.0 - a * a);
        }
        grads
            .b2
            .iter_mut()
            .zip(grad_out)
            .for_each(|(g, go)| *g += go);
        for (i, x) in trace.input.iter().enumerate() {
            let grow = &mut grads.w1[i * self.hidden..(i + 1) * self.hidden];
            grow.iter_mut()
                .zip(&grad_pre)
                .for_each(|(g, gp)| *g += x * gp);
        }
        grads
            .b1
            .iter_mut()
            .zip(&grad_pre)
            .for_each(|(g, gp)| *g += gp);
    }
}

pub fn tv_input(text: &[f64], frames: &[Vec<f64>; 3]) -> Vec<f64> {
    super::vector::concat([text, &frames[0], &frames[1], &frames[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_gives_zero_output() {
        let head = FusionHead::zeros(4, 3, 2);
        let out = head
            .fuse(&[1.0], &[vec![2.0], vec![3.0], vec![4.0]])
            .unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        // identity first layer with biases, diagonal second layer
        let head = FusionHead {
            in_dim: 2,
            hidden: 2,
            out_dim: 2,
            w1: vec![1.0, 0.0, 0.0, 1.0],
            b1: vec![0.5, -0.5],
            w2: vec![1.0, 0.0, 0.0, 2.0],
            b2: vec![0.1, 0.0],
        };
        let out = head.forward(&[0.25, 1.0]).unwrap();
        let expected = [(0.75f64).tanh() + 0.1, 2.0 * (0.5f64).tanh()];
        assert!((out[0] - expected[0]).abs() < 1e-15);
        assert!((out[1] - expected[1]).abs() < 1e-15);
        // tanh(0.75) = 0.635148952387..., tanh(0.5) = 0.462117157260...
        assert!((out[0] - 0.735_148_952_387_0).abs() < 1e-12);
        assert!((out[1] - 0.924_234_314_520_0).abs() < 1e-11);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = FusionHead::init(8, 8, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = FusionHead::init(8, 8, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let (oa, ob) = (a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert_eq!(
            oa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ob.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn fuse_rejects_bad_shapes() {
        let head = FusionHead::zeros(4, 2, 2);
        assert!(head
            .fuse(&[1.0, 2.0], &[vec![1.0], vec![1.0], vec![1.0]])
            .is_err());
        assert!(head
            .fuse(&[1.0], &[vec![1.0], vec![1.0, 2.0], vec![1.0]])
            .is_err());
        let mut bad = head.clone();
        bad.w1[0] = f64::INFINITY;
        assert!(matches!(
            bad.fuse(&[1.0], &[vec![1.0], vec![1.0], vec![1.0]]),
            Err(Error::NonFinite(_))
        ));
    }
}
