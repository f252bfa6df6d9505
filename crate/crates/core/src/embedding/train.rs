//! Joint training of the query encoder and fusion head under the retrieval
//! loss, with documentary-level validation split and early stopping.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{grad_retrieval_loss, total_loss, LossKind, RetrievalBatch};
use super::model::RetrievalModel;
use super::query::{SumTokenPosition, TextEmbedder, DEFAULT_MAX_CONTEXT_TOKENS};
use crate::corpus::{ClipRecord, TrainingSample};
use crate::error::{Error, Result};
use crate::retriever::sampler::NegativeSampler;
use crate::rng::stage_rng;

/// Optimizer used by [`train`]; recorded alongside trained parameters.
pub const OPTIMIZER: &str = "sgd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the retrieval term in `l_gen + alpha · l_ret`.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub same_doc_negative_fraction: f64,
    /// Negatives per sample; `batch_size - 1` when unset.
    pub n_negatives: Option<usize>,
    pub loss_kind: LossKind,
    pub include_positive_in_denominator: bool,
    pub sum_token_position: SumTokenPosition,
    pub max_context_tokens: usize,
    /// Share of samples held out for validation, split by documentary.
    pub validation_fraction: f64,
    /// Externally supplied generation loss; a constant here.
    pub l_gen: f64,
    /// Fusion head hidden width; the head input width when unset.
    pub hidden_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            learning_rate: 1e-5,
            batch_size: 64,
            max_epochs: 200,
            patience: 30,
            seed: 0,
            same_doc_negative_fraction: 0.3,
            n_negatives: None,
            loss_kind: LossKind::Contrastive,
            include_positive_in_denominator: false,
            sum_token_position: SumTokenPosition::End,
            max_context_tokens: DEFAULT_MAX_CONTEXT_TOKENS,
            validation_fraction: 0.1,
            l_gen: 0.0,
            hidden_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn n_negatives(&self) -> usize {
        self.n_negatives
            .unwrap_or(self.batch_size.saturating_sub(1))
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be finite and non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_context_tokens == 0 {
            return bad("batch_size, max_epochs and max_context_tokens must be at least 1");
        }
        for (name, f) in [
            (
                "same_doc_negative_fraction",
                self.same_doc_negative_fraction,
            ),
            ("validation_fraction", self.validation_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.n_negatives == Some(0) || self.hidden_dim == Some(0) {
            return bad("n_negatives and hidden_dim must be at least 1");
        }
        if !self.l_gen.is_finite() {
            return bad("l_gen must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation loss.
    pub model: RetrievalModel,
    pub history: Vec<EpochStats>,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Splits sample indices into (train, validation) by documentary: whole
/// documentaries go to validation, in seeded order, until it holds at least
/// `fraction` of the samples. At least one documentary always stays in train.
pub fn split_by_documentary(
    samples: &[TrainingSample],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_doc.entry(s.doc_id.as_str()).or_default().push(i);
    }
    let mut docs: Vec<&str> = by_doc.keys().copied().collect();
    docs.shuffle(&mut stage_rng(seed, "validation-split"));
    let target = (fraction * samples.len() as f64).round() as usize;
    let mut val = Vec::new();
    // the last documentary always stays in train
    for d in docs.split_last().map_or(&[][..], |(_, rest)| rest) {
        if val.len() >= target {
            break;
        }
        val.extend(&by_doc[d]);
    }
    val.sort_unstable();
    let in_val: std::collections::HashSet<usize> = val.iter().copied().collect();
    let train = (0..samples.len()).filter(|i| !in_val.contains(i)).collect();
    (train, val)
}

struct Prepared {
    features: Vec<Vec<f64>>,
    positives: Vec<usize>,
    clip_inputs: Vec<Vec<f64>>,
    sampler: NegativeSampler,
}

fn prepare(
    model: &RetrievalModel,
    samples: &[TrainingSample],
    clips: &[ClipRecord],
    embedder: &dyn TextEmbedder,
) -> Result<Prepared> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(clips.len());
    for (i, c) in clips.iter().enumerate() {
        if index.insert(c.clip_id.as_str(), i).is_some() {
            return Err(Error::DuplicateId(c.clip_id.clone()));
        }
    }
    let clip_inputs = clips
        .iter()
        .map(|c| model.clip_input(c))
        .collect::<Result<Vec<_>>>()?;
    let mut features = Vec::with_capacity(samples.len());
    let mut positives = Vec::with_capacity(samples.len());
    for s in samples {
        let pos = *index
            .get(s.positive_clip_id.as_str())
            .ok_or_else(|| Error::MissingClip(s.positive_clip_id.clone()))?;
        positives.push(pos);
        features.push(
            model
                .encoder
                .features(&s.prev_narration, &s.next_narration, embedder)?,
        );
    }
    let doc_ids: Vec<&str> = clips.iter().map(|c| c.doc_id.as_str()).collect();
    Ok(Prepared {
        features,
        positives,
        clip_inputs,
        sampler: NegativeSampler::new(&doc_ids),
    })
}

impl Prepared {
    fn batch(
        &self,
        members: &[usize],
        config: &TrainConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<RetrievalBatch> {
        let mut batch = RetrievalBatch::default();
        for &i in members {
            let negatives = match config.loss_kind {
                LossKind::Contrastive => {
                    self.sampler
                        .draw(
                            self.positives[i],
                            config.same_doc_negative_fraction,
                            config.n_negatives(),
                            rng,
                        )?
                        .indices
                }
                LossKind::L2 => Vec::new(),
            };
            batch.features.push(self.features[i].clone());
            batch.positives.push(self.positives[i]);
            batch.negatives.push(negatives);
        }
        Ok(batch)
    }
}

fn mean_loss(
    model: &RetrievalModel,
    prep: &Prepared,
    batch: &RetrievalBatch,
    config: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(f64::NAN);
    }
    let (l, _) = grad_retrieval_loss(
        model,
        &prep.clip_inputs,
        batch,
        config.loss_kind,
        config.include_positive_in_denominator,
    )?;
    Ok(l / batch.len() as f64)
}

/// Trains `model` by minibatch gradient descent on
/// `l_gen + alpha · l_ret` (batch mean). The losses recorded in the history
/// are mean per-sample retrieval losses on fixed negative draws, so epochs are
/// comparable. Deterministic for a given `config.seed`.
pub fn train(
    mut model: RetrievalModel,
    samples: &[TrainingSample],
    clips: &[ClipRecord],
    embedder: &dyn TextEmbedder,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    model.encoder.max_context_tokens = config.max_context_tokens;
    model.encoder.sum_position = config.sum_token_position;
    model.check()?;
    let prep = prepare(&model, samples, clips, embedder)?;

    let (train_idx, val_idx) =
        split_by_documentary(samples, config.validation_fraction, config.seed);
    let mut eval_rng = stage_rng(config.seed, "train-eval-negatives");
    let train_eval = prep.batch(&train_idx, config, &mut eval_rng)?;
    let val_eval = prep.batch(&val_idx, config, &mut eval_rng)?;
    let monitor = |m: &RetrievalModel| -> Result<(f64, f64)> {
        let tl = mean_loss(m, &prep, &train_eval, config)?;
        let vl = if val_eval.is_empty() {
            tl
        } else {
            mean_loss(m, &prep, &val_eval, config)?
        };
        Ok((tl, vl))
    };

    let (initial_train_loss, initial_val_loss) = monitor(&model)?;
    let mut rng = stage_rng(config.seed, "train-batches");
    let mut order = train_idx.clone();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for members in order.chunks(config.batch_size) {
            let batch = prep.batch(members, config, &mut rng)?;
            let (l_ret, grads) = grad_retrieval_loss(
                &model,
                &prep.clip_inputs,
                &batch,
                config.loss_kind,
                config.include_positive_in_denominator,
            )?;
            total_loss(config.l_gen, l_ret, config.alpha)?;
            // l_gen is constant, so the gradient of the total is alpha times the retrieval gradient
            let scale = config.alpha / batch.len() as f64;
            if scale != 0.0 {
                model.sgd_step(&grads, config.learning_rate * scale);
            }
        }
        let (train_loss, val_loss) = monitor(&model)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        if val_loss < best.0 {
            best = (val_loss, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            best_val_loss: best.0,
        });
        if since_best >= config.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best.1,
        history,
        initial_train_loss,
        initial_val_loss,
        train_samples: train_idx.len(),
        val_samples: val_idx.len(),
    })
}
