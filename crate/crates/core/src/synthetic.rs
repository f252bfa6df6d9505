//! Seeded synthetic corpora with a known right answer for every quote slot.
//!
//! Each clip gets a random unit vector as its text embedding. Its frames are
//! a fixed random linear view of that vector plus noise, and the narration
//! before it embeds near it, so a retriever has something real to learn.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{clip_id_for, ClipRecord, DocumentaryRecord, SpeakerSegment, TrainingSample};
use crate::embedding::model::RetrievalModel;
use crate::embedding::query::{HashingEmbedder, LookupEmbedder};
use crate::embedding::vector::normalized;
use crate::error::{Error, Result};
use crate::retriever::{recall_at_k, retrieve_top_k_as, CandidatePool, RetrievalResult};
use crate::rng::stage_rng;
use crate::script::{Encoding, Script, ScriptElement};

fn gaussian(rng: &mut ChaCha8Rng, d: usize, sigma: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    normalized(&gaussian(rng, d, 1.0))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Row-major `rows × cols` Gaussian matrix scaled by `1/√cols`.
fn projection(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    gaussian(rng, rows * cols, 1.0 / (cols as f64).sqrt())
}

fn project(m: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            m[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub clips_per_doc: usize,
    pub text_dim: usize,
    pub frame_dim: usize,
    /// Standard deviation of the noise added to a query.
    pub query_noise: f64,
    pub frame_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 20,
            clips_per_doc: 50,
            text_dim: 16,
            frame_dim: 8,
            query_noise: 0.1,
            frame_noise: 0.05,
            seed: 0,
        }
    }
}

/// Clips with embeddings and one training sample per clip. The sample's
/// previous narration is a unique key whose embedding, in `query_table`, is
/// the clip's text embedding plus noise.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub clips: Vec<ClipRecord>,
    pub samples: Vec<TrainingSample>,
    pub query_table: HashMap<String, Vec<f64>>,
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = stage_rng(config.seed, "synthetic-corpus");
    let views: Vec<Vec<f64>> = (0..3)
        .map(|_| projection(&mut rng, config.frame_dim, config.text_dim))
        .collect();
    let mut clips = Vec::new();
    let mut samples = Vec::new();
    let mut query_table = HashMap::new();
    for d in 0..config.n_docs {
        let doc = format!("doc{d:02}");
        for m in 0..config.clips_per_doc {
            let u = unit(&mut rng, config.text_dim);
            let frames = views.iter().map(|v| {
                add(
                    &project(v, config.frame_dim, &u),
                    &gaussian(&mut rng, config.frame_dim, config.frame_noise),
                )
            });
            let frames: Vec<Vec<f64>> = frames.collect();
            let id = clip_id_for(&doc, m);
            let mut clip = ClipRecord::new(
                &id,
                &doc,
                m as f64 * 10.0,
                m as f64 * 10.0 + 6.0,
                format!("interview answer {id}"),
            );
            let key = format!("narration before {id}");
            query_table.insert(
                key.clone(),
                add(&u, &gaussian(&mut rng, config.text_dim, config.query_noise)),
            );
            clip.text_embedding = Some(u);
            clip.frame_embeddings = Some([frames[0].clone(), frames[1].clone(), frames[2].clone()]);
            clips.push(clip);
            samples.push(TrainingSample {
                doc_id: doc.clone(),
                prev_narration: key,
                next_narration: String::new(),
                positive_clip_id: id,
            });
        }
    }
    SyntheticCorpus {
        config: config.clone(),
        clips,
        samples,
        query_table,
    }
}

impl SyntheticCorpus {
    /// Looks narration keys up in the query table; anything else is hashed.
    pub fn embedder(&self) -> LookupEmbedder<HashingEmbedder> {
        LookupEmbedder::new(
            self.query_table.clone(),
            HashingEmbedder::new(self.config.text_dim, self.config.seed),
        )
        .expect("table rows have the text dimension")
    }

    /// Fresh noisy queries, one per clip, ranked against the clip's own
    /// documentary. Returns the results and the truth map.
    pub fn held_out_results(
        &self,
        model: &RetrievalModel,
        seed: u64,
    ) -> Result<(Vec<RetrievalResult>, HashMap<String, String>)> {
        let pool = CandidatePool::for_model(self.clips.clone(), model)?;
        let mut pools: BTreeMap<&str, CandidatePool> = BTreeMap::new();
        let mut rng = stage_rng(seed, "synthetic-eval-queries");
        let mut results = Vec::with_capacity(self.clips.len());
        let mut truth = HashMap::with_capacity(self.clips.len());
        for c in &self.clips {
            let doc_pool = pools
                .entry(c.doc_id.as_str())
                .or_insert_with(|| pool.restrict_to_doc(&c.doc_id));
            let u = c
                .text_embedding
                .as_ref()
                .ok_or_else(|| Error::MissingEmbedding {
                    clip_id: c.clip_id.clone(),
                    what: "a text embedding".into(),
                })?;
            let mut features = add(
                &normalized(u),
                &gaussian(&mut rng, u.len(), self.config.query_noise),
            );
            features.resize(2 * u.len(), 0.0);
            let h = model.encoder.project(&features)?;
            results.push(retrieve_top_k_as(&c.clip_id, &h, doc_pool, doc_pool.len())?);
            truth.insert(c.clip_id.clone(), c.clip_id.clone());
        }
        Ok((results, truth))
    }

    /// Recall at each `k` on fresh held-out queries.
    pub fn held_out_recall(
        &self,
        model: &RetrievalModel,
        ks: &[usize],
        seed: u64,
    ) -> Result<Vec<(usize, f64)>> {
        let (results, truth) = self.held_out_results(model, seed)?;
        ks.iter()
            .map(|&k| Ok((k, recall_at_k(&results, &truth, k)?)))
            .collect()
    }
}

const VOCAB: &[&str] = &[
    "river",
    "winter",
    "harbor",
    "village",
    "engine",
    "letters",
    "mountain",
    "archive",
    "factory",
    "island",
    "bridge",
    "storm",
    "market",
    "school",
    "railway",
    "forest",
    "lantern",
    "garden",
    "mill",
    "quarry",
    "coast",
    "festival",
    "workers",
    "families",
    "children",
    "soldiers",
    "farmers",
    "sailors",
    "miners",
    "builders",
    "neighbors",
    "strangers",
    "remember",
    "carried",
    "rebuilt",
    "lost",
    "found",
    "waited",
    "crossed",
    "opened",
    "closed",
    "followed",
    "changed",
    "quietly",
    "slowly",
    "suddenly",
    "together",
    "again",
    "before",
    "after",
    "during",
    "beyond",
    "under",
    "across",
    "old",
    "new",
    "broken",
    "hidden",
    "distant",
    "golden",
    "silent",
    "bright",
    "narrow",
    "open",
    "last",
    "first",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize, used: &mut HashSet<String>) -> String {
    loop {
        let mut s: Vec<&str> = (0..words)
            .map(|_| *VOCAB.choose(rng).expect("non-empty vocabulary"))
            .collect();
        let first = s[0];
        let cap = first[..1].to_uppercase() + &first[1..];
        s[0] = &cap;
        let text = format!("{}.", s.join(" "));
        if used.insert(text.clone()) {
            return text;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub n_docs: usize,
    pub clips_per_doc: usize,
    /// Quote slots in each generated script; at most `clips_per_doc`.
    pub quotes_per_script: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_docs: 4,
            clips_per_doc: 8,
            quotes_per_script: 3,
            dim: 16,
            noise: 0.1,
            seed: 7,
        }
    }
}

/// A small end-to-end corpus: transcripts, every embedding the pipeline
/// reads, a generated placeholder script per documentary and a reference
/// script quoting the true clips.
#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub documentaries: Vec<DocumentaryRecord>,
    /// Keyed by clip id.
    pub clip_text: BTreeMap<String, Vec<f64>>,
    /// Keyed by narration text.
    pub narration: BTreeMap<String, Vec<f64>>,
    /// Keyed by `(doc_id, second)`.
    pub frames: BTreeMap<(String, usize), Vec<f64>>,
    pub scripts: Vec<Script>,
    pub references: Vec<Script>,
}

/// Transcript layout per documentary: narration, clip, narration, clip, …,
/// narration. The narrator speaks 14 words per segment and the two guests 6,
/// so the narrator always has the most words.
pub fn generate_demo(config: &DemoConfig) -> Result<DemoCorpus> {
    if config.quotes_per_script > config.clips_per_doc
        || config.clips_per_doc == 0
        || config.dim == 0
    {
        return Err(Error::Config(
            "demo corpus needs 1 ≤ quotes_per_script ≤ clips_per_doc and dim ≥ 1".into(),
        ));
    }
    let mut rng = stage_rng(config.seed, "demo-corpus");
    let dim = config.dim;
    let view = projection(&mut rng, dim, dim);
    let mut used = HashSet::new();
    let mut out = DemoCorpus {
        documentaries: Vec::new(),
        clip_text: BTreeMap::new(),
        narration: BTreeMap::new(),
        frames: BTreeMap::new(),
        scripts: Vec::new(),
        references: Vec::new(),
    };
    for d in 0..config.n_docs {
        let doc = format!("doc{d:02}");
        let mut segments = Vec::new();
        let mut narrations = Vec::new();
        let mut clip_ids = Vec::new();
        let mut transcripts = Vec::new();
        let mut t = 0.0;
        let mut frame_targets: Vec<(f64, f64, Vec<f64>)> = Vec::new();
        let units: Vec<Vec<f64>> = (0..config.clips_per_doc)
            .map(|_| unit(&mut rng, dim))
            .collect();
        for i in 0..=config.clips_per_doc {
            let text = sentence(&mut rng, 14, &mut used);
            let e = match units.get(i) {
                Some(u) => add(u, &gaussian(&mut rng, dim, config.noise)),
                None => unit(&mut rng, dim),
            };
            let (start, end) = (t, t + 5.0);
            frame_targets.push((start, end, normalized(&e)));
            out.narration.insert(text.clone(), e);
            segments.push(SpeakerSegment {
                speaker_id: "narrator".into(),
                start_s: start,
                end_s: end,
                text: text.clone(),
            });
            narrations.push(text);
            t = end;
            if let Some(u) = units.get(i) {
                let text = sentence(&mut rng, 6, &mut used);
                let id = clip_id_for(&doc, segments.len());
                let (start, end) = (t, t + 4.0);
                frame_targets.push((start, end, normalized(&project(&view, dim, u))));
                segments.push(SpeakerSegment {
                    speaker_id: if i % 2 == 0 { "guest_a" } else { "guest_b" }.into(),
                    start_s: start,
                    end_s: end,
                    text: text.clone(),
                });
                out.clip_text.insert(id.clone(), u.clone());
                clip_ids.push(id);
                transcripts.push(text);
                t = end;
            }
        }
        for (start, end, target) in frame_targets {
            for s in start as usize..end as usize {
                out.frames.insert(
                    (doc.clone(), s),
                    add(&target, &gaussian(&mut rng, dim, config.noise)),
                );
            }
        }
        let q = config.quotes_per_script;
        let mut gen = Vec::new();
        let mut reference = Vec::new();
        for i in 0..=q {
            gen.push(ScriptElement::narration(narrations[i].clone()));
            reference.push(ScriptElement::narration(narrations[i].clone()));
            if i < q {
                gen.push(ScriptElement::QuotePlaceholder);
                reference.push(ScriptElement::DirectQuote {
                    text: transcripts[i].clone(),
                    resolved_clip_id: Some(clip_ids[i].clone()),
                });
            }
        }
        out.scripts.push(Script::new(&doc, gen, Encoding::Idq)?);
        out.references
            .push(Script::new(&doc, reference, Encoding::Dq)?);
        out.documentaries
            .push(DocumentaryRecord::new(&doc, segments));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_training_samples, identify_narrator};
    use crate::embedding::model::RetrievalVariant;
    use crate::embedding::query::QueryEncoder;

    #[test]
    fn corpus_shape_and_determinism() {
        let cfg = SyntheticConfig {
            n_docs: 3,
            clips_per_doc: 4,
            ..Default::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.clips, b.clips);
        assert_eq!(a.clips.len(), 12);
        assert_eq!(a.samples.len(), 12);
        assert_eq!(a.clips[5].frame_embeddings.as_ref().unwrap()[2].len(), 8);
    }

    #[test]
    fn identity_encoder_recalls_the_t_variant() {
        let corpus = generate(&SyntheticConfig {
            n_docs: 2,
            clips_per_doc: 20,
            ..Default::default()
        });
        let model = RetrievalModel {
            variant: RetrievalVariant::T,
            encoder: QueryEncoder::sum_of_sides(16),
            head: None,
        };
        let r = corpus.held_out_recall(&model, &[1, 20], 3).unwrap();
        assert!(r[0].1 > 0.9, "{r:?}");
        assert_eq!(r[1].1, 1.0);
    }

    #[test]
    fn demo_corpus_is_consistent() {
        let demo = generate_demo(&DemoConfig::default()).unwrap();
        for (doc, script) in demo.documentaries.iter().zip(&demo.scripts) {
            let narrator = identify_narrator(doc).unwrap();
            assert_eq!(narrator, "narrator");
            let samples = build_training_samples(doc, &narrator);
            assert_eq!(samples.len(), 8);
            for s in &samples {
                assert!(demo.clip_text.contains_key(&s.positive_clip_id));
                assert!(demo.narration.contains_key(&s.prev_narration));
            }
            assert_eq!(script.placeholder_indices().len(), 3);
            let last = doc.segments.last().unwrap().end_s as usize;
            assert!(demo.frames.contains_key(&(doc.doc_id.clone(), last - 1)));
        }
    }
}
