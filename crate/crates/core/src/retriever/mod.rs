//! Clip-fitness ranking over a candidate pool, recall evaluation and quote
//! fulfillment.

pub mod sampler;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::corpus::{ClipRecord, TrainingSample};
use crate::embedding::model::{clip_input, RetrievalModel, RetrievalVariant};
use crate::embedding::query::TextEmbedder;
use crate::embedding::vector::{check_dims, cosine_similarity, norm};
use crate::embedding::FusionHead;
use crate::error::{Error, Result};
use crate::rng::stage_rng;
use crate::script::{Script, ScriptElement};

pub use sampler::{same_doc_target, NegativeDraw, NegativeSampler};

/// Clips with their candidate embeddings `e_m`, computed once at build time.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    clips: Vec<ClipRecord>,
    variant: RetrievalVariant,
    embeddings: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query_id: String,
    /// `(clip_id, fitness)`, best first.
    pub ranked: Vec<(String, f64)>,
}

impl RetrievalResult {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|(id, _)| id.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(id, _)| id.as_str())
    }
}

pub fn build_pool(
    clips: Vec<ClipRecord>,
    head: Option<&FusionHead>,
    variant: RetrievalVariant,
) -> Result<CandidatePool> {
    let mut index = HashMap::with_capacity(clips.len());
    for (i, c) in clips.iter().enumerate() {
        if index.insert(c.clip_id.clone(), i).is_some() {
            return Err(Error::DuplicateId(c.clip_id.clone()));
        }
    }
    let mut embeddings = Vec::with_capacity(clips.len());
    for c in &clips {
        let input = clip_input(variant, c)?;
        let e = match variant {
            RetrievalVariant::T => input,
            RetrievalVariant::Tv => head
                .ok_or_else(|| Error::Config("TV retrieval needs a fusion head".into()))?
                .forward(&input)?,
        };
        if let Some(first) = embeddings.first() {
            check_dims(Vec::len(first), e.len())?;
        }
        if norm(&e) == 0.0 {
            return Err(Error::ZeroNorm(c.clip_id.clone()));
        }
        embeddings.push(e);
    }
    Ok(CandidatePool {
        clips,
        variant,
        embeddings,
        index,
    })
}

impl CandidatePool {
    /// Pool for a trained model, using its head when it has one.
    pub fn for_model(clips: Vec<ClipRecord>, model: &RetrievalModel) -> Result<Self> {
        build_pool(clips, model.head.as_ref(), model.variant)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn variant(&self) -> RetrievalVariant {
        self.variant
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.index.get(clip_id).map(|&i| &self.clips[i])
    }

    pub fn position(&self, clip_id: &str) -> Option<usize> {
        self.index.get(clip_id).copied()
    }

    /// The same clips restricted to one documentary.
    pub fn restrict_to_doc(&self, doc_id: &str) -> CandidatePool {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.clips[i].doc_id == doc_id)
            .collect();
        let clips: Vec<ClipRecord> = keep.iter().map(|&i| self.clips[i].clone()).collect();
        let index = clips
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clip_id.clone(), i))
            .collect();
        CandidatePool {
            clips,
            variant: self.variant,
            embeddings: keep.iter().map(|&i| self.embeddings[i].clone()).collect(),
            index,
        }
    }
}

pub fn clip_fitness(h: &[f64], e_m: &[f64]) -> Result<f64> {
    cosine_similarity(h, e_m)
}

/// Descending score, then ascending id.
fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn rank(query_id: &str, mut scored: Vec<(String, f64)>, k: usize) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if scored.is_empty() {
        return Err(Error::EmptyPool);
    }
    scored.sort_by(rank_order);
    scored.truncate(k);
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        ranked: scored,
    })
}

/// Exact top-`k` by clip fitness over the whole pool.
pub fn retrieve_top_k(h: &[f64], pool: &CandidatePool, k: usize) -> Result<RetrievalResult> {
    retrieve_top_k_as("", h, pool, k)
}

pub fn retrieve_top_k_as(
    query_id: &str,
    h: &[f64],
    pool: &CandidatePool,
    k: usize,
) -> Result<RetrievalResult> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let scored = pool
        .clips
        .iter()
        .zip(&pool.embeddings)
        .map(|(c, e)| Ok((c.clip_id.clone(), clip_fitness(h, e)?)))
        .collect::<Result<Vec<_>>>()?;
    rank(query_id, scored, k)
}

/// Share of queries whose true clip is among their first `k` results.
pub fn recall_at_k(
    results: &[RetrievalResult],
    truth: &HashMap<String, String>,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if results.is_empty() {
        return Err(Error::EmptyInput("retrieval results".into()));
    }
    let mut hits = 0usize;
    for r in results {
        let want = truth
            .get(&r.query_id)
            .ok_or_else(|| Error::MissingTruth(r.query_id.clone()))?;
        if r.ids().take(k).any(|id| id == want) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// GroupSampler negatives for each sample of a batch, as clip ids.
pub fn group_sample_negatives(
    batch: &[TrainingSample],
    pool: &CandidatePool,
    fraction: f64,
    n_neg: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let doc_ids: Vec<&str> = pool.clips.iter().map(|c| c.doc_id.as_str()).collect();
    let sampler = NegativeSampler::new(&doc_ids);
    let mut rng = stage_rng(seed, "sample");
    batch
        .iter()
        .map(|s| {
            let pos = pool
                .position(&s.positive_clip_id)
                .ok_or_else(|| Error::MissingClip(s.positive_clip_id.clone()))?;
            let draw = sampler.draw(pos, fraction, n_neg, &mut rng)?;
            Ok(draw
                .indices
                .into_iter()
                .map(|i| pool.clips[i].clip_id.clone())
                .collect())
        })
        .collect()
}

/// A fulfilled script plus, for every quote element, the full candidate
/// ranking behind its resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Fulfillment {
    pub script: Script,
    /// Keyed by element index.
    pub rankings: BTreeMap<usize, RetrievalResult>,
}

/// Nearest narration texts before and after element `at`.
fn surrounding_narration(elements: &[ScriptElement], at: usize) -> (&str, &str) {
    let prev = elements[..at]
        .iter()
        .rev()
        .find_map(ScriptElement::narration_text)
        .unwrap_or("");
    let next = elements[at + 1..]
        .iter()
        .find_map(ScriptElement::narration_text)
        .unwrap_or("");
    (prev, next)
}

/// Resolves every quote slot against `pool`.
///
/// Placeholders are answered by encoding their surrounding narration and
/// taking the best-fitness clip; direct quotes by the clip whose text
/// embedding is nearest to the quoted words. A placeholder becomes a direct
/// quote carrying the clip's transcript; a direct quote keeps its own words.
pub fn fulfill_quotes(
    script: &Script,
    pool: &CandidatePool,
    model: &RetrievalModel,
    embedder: &dyn TextEmbedder,
) -> Result<Fulfillment> {
    let mut elements = script.elements.clone();
    let mut rankings = BTreeMap::new();
    let quote_slots: Vec<usize> = (0..elements.len())
        .filter(|&i| elements[i].is_quote())
        .collect();
    if quote_slots.is_empty() {
        return Ok(Fulfillment {
            script: script.clone(),
            rankings,
        });
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    for i in quote_slots {
        let query_id = format!("{}#{i}", script.doc_id);
        let result = match &script.elements[i] {
            ScriptElement::QuotePlaceholder => {
                let (prev, next) = surrounding_narration(&script.elements, i);
                if prev.is_empty() && next.is_empty() {
                    return Err(Error::UnresolvablePlaceholder(i));
                }
                let h = model.encoder.encode(prev, next, embedder)?;
                retrieve_top_k_as(&query_id, &h, pool, pool.len())?
            }
            ScriptElement::DirectQuote { text, .. } => {
                nearest_transcript(&query_id, text, pool, embedder)?
            }
            ScriptElement::Narration(_) => unreachable!("filtered to quote slots"),
        };
        let best = result.top().expect("pool is non-empty").to_string();
        elements[i] = match &script.elements[i] {
            ScriptElement::DirectQuote { text, .. } => ScriptElement::DirectQuote {
                text: text.clone(),
                resolved_clip_id: Some(best),
            },
            _ => ScriptElement::DirectQuote {
                text: pool
                    .get(&best)
                    .expect("ranked ids come from the pool")
                    .transcript
                    .clone(),
                resolved_clip_id: Some(best),
            },
        };
        rankings.insert(i, result);
    }
    Ok(Fulfillment {
        script: Script {
            doc_id: script.doc_id.clone(),
            elements,
            encoding: script.encoding,
        },
        rankings,
    })
}

/// Ranks pool clips by cosine between their text embedding and the embedded
/// quote body. A zero-norm quote embedding scores every clip 0.
fn nearest_transcript(
    query_id: &str,
    body: &str,
    pool: &CandidatePool,
    embedder: &dyn TextEmbedder,
) -> Result<RetrievalResult> {
    let q = embedder.embed(body);
    let zero = norm(&q) == 0.0;
    let scored = pool
        .clips
        .iter()
        .map(|c| {
            let e = c
                .text_embedding
                .as_ref()
                .ok_or_else(|| Error::MissingEmbedding {
                    clip_id: c.clip_id.clone(),
                    what: "a text embedding".into(),
                })?;
            check_dims(e.len(), q.len())?;
            let s = if zero { 0.0 } else { cosine_similarity(&q, e)? };
            Ok((c.clip_id.clone(), s))
        })
        .collect::<Result<Vec<_>>>()?;
    rank(query_id, scored, pool.len())
}
