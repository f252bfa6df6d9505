use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fusion::{tv_input, FusionGrads, FusionHead};
use super::query::{QueryEncoder, QueryGrads};
use crate::corpus::ClipRecord;
use crate::error::{Error, Result};

/// Which clip representation candidates are scored by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalVariant {
    /// Clip text embedding only.
    T,
    /// Fusion of the text embedding with three frame embeddings.
    #[default]
    #[serde(rename = "TV")]
    Tv,
}

impl RetrievalVariant {
    pub fn name(self) -> &'static str {
        match self {
            RetrievalVariant::T => "T",
            RetrievalVariant::Tv => "TV",
        }
    }
}

impl std::str::FromStr for RetrievalVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(RetrievalVariant::T),
            "TV" | "tv" => Ok(RetrievalVariant::Tv),
            other => Err(Error::Config(format!(
                "unknown retrieval variant `{other}` (expected T or TV)"
            ))),
        }
    }
}

/// The trainable half of retrieval: query encoder plus, for TV, the fusion head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalModel {
    pub variant: RetrievalVariant,
    pub encoder: QueryEncoder,
    pub head: Option<FusionHead>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: QueryGrads,
    pub head: Option<FusionGrads>,
}

impl ModelGrads {
    /// Same order as [`RetrievalModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        if let Some(h) = &self.head {
            v.extend(h.flatten());
        }
        v
    }
}

impl RetrievalModel {
    /// Seeded model. `hidden` defaults to the head input width.
    pub fn init<R: Rng>(
        variant: RetrievalVariant,
        query_text_dim: usize,
        clip_text_dim: usize,
        frame_dim: usize,
        hidden: Option<usize>,
        rng: &mut R,
    ) -> Self {
        match variant {
            RetrievalVariant::T => RetrievalModel {
                variant,
                encoder: QueryEncoder::init(query_text_dim, clip_text_dim, rng),
                head: None,
            },
            RetrievalVariant::Tv => {
                let in_dim = FusionHead::tv_in_dim(clip_text_dim, frame_dim);
                let out = clip_text_dim;
                let head = FusionHead::init(in_dim, hidden.unwrap_or(in_dim), out, rng);
                let encoder = QueryEncoder::init(query_text_dim, out, rng);
                RetrievalModel {
                    variant,
                    encoder,
                    head: Some(head),
                }
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        self.encoder.check()?;
        match (&self.head, self.variant) {
            (None, RetrievalVariant::T) => Ok(()),
            (Some(head), RetrievalVariant::Tv) => {
                head.check()?;
                if head.out_dim != self.encoder.out_dim {
                    return Err(Error::DimensionMismatch {
                        expected: head.out_dim,
                        actual: self.encoder.out_dim,
                    });
                }
                Ok(())
            }
            (None, RetrievalVariant::Tv) => {
                Err(Error::Config("TV variant needs a fusion head".into()))
            }
            (Some(_), RetrievalVariant::T) => {
                Err(Error::Config("T variant takes no fusion head".into()))
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.encoder.params().copied().collect();
        if let Some(h) = &self.head {
            v.extend(h.params().copied());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = self.encoder.params_mut().collect();
        if let Some(h) = &mut self.head {
            v.extend(h.params_mut());
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.head.as_ref().map_or(0, FusionHead::param_count)
    }

    /// Plain gradient step `θ ← θ − lr · g`.
    pub fn sgd_step(&mut self, grads: &ModelGrads, lr: f64) {
        for (p, g) in self.params_mut().into_iter().zip(grads.flatten()) {
            *p -= lr * g;
        }
    }

    /// The raw clip input this model's variant consumes.
    pub fn clip_input(&self, clip: &ClipRecord) -> Result<Vec<f64>> {
        clip_input(self.variant, clip)
    }

    /// `e_m` for a clip input produced by [`clip_input`].
    pub fn candidate_embedding(&self, input: &[f64]) -> Result<Vec<f64>> {
        match &self.head {
            Some(head) => head.forward(input),
            None => Ok(input.to_vec()),
        }
    }
}

pub fn clip_input(variant: RetrievalVariant, clip: &ClipRecord) -> Result<Vec<f64>> {
    let text = clip
        .text_embedding
        .as_ref()
        .ok_or_else(|| Error::MissingEmbedding {
            clip_id: clip.clip_id.clone(),
            what: "a text embedding".into(),
        })?;
    match variant {
        RetrievalVariant::T => Ok(text.clone()),
        RetrievalVariant::Tv => {
            let frames = clip
                .frame_embeddings
                .as_ref()
                .ok_or_else(|| Error::MissingEmbedding {
                    clip_id: clip.clip_id.clone(),
                    what: "three frame embeddings".into(),
                })?;
            let d = frames[0].len();
            if frames.iter().any(|f| f.len() != d) {
                return Err(Error::MissingEmbedding {
                    clip_id: clip.clip_id.clone(),
                    what: "frame embeddings of one shared dimension".into(),
                });
            }
            Ok(tv_input(text, frames))
        }
    }
}
