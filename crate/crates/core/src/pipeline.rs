//! File-level pipeline: ingest, train, retrieve, assemble, evaluate.
//!
//! Every stage reads its inputs from the configured paths and the output
//! directory, and writes deterministic files back into the output directory.
//! Configuration is checked before anything is written.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembler::{self, frame_pools_from_vectors, CosineScorer, FramePool, DEFAULT_WPM};
use crate::corpus::{
    build_training_samples, chunk_transcript, extract_quotable_clips, format_clip_file,
    format_sample_file, format_transcript, identify_narrator_with, load_transcript,
    parse_clip_file, parse_sample_file, ClipRecord, NarratorRule, TrainingSample,
};
use crate::embedding::io::{
    load_model, read_vector_file, save_model, write_vector_file, VectorFile,
};
use crate::embedding::model::{RetrievalModel, RetrievalVariant};
use crate::embedding::query::{HashingEmbedder, LookupEmbedder, QueryEncoder, TextEmbedder};
use crate::embedding::train::{train, EpochStats, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_document, format_report_csv, DocumentInputs, MetricSettings};
use crate::retriever::{
    fulfill_quotes, recall_at_k, retrieve_top_k_as, CandidatePool, RetrievalResult,
};
use crate::rng::{derive_seed, stage_rng};
use crate::script::{
    detect_encoding, parse, parse_dq, serialize_as, Encoding, Script, ScriptElement,
};
use crate::synthetic::{generate_demo, DemoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of `*.tsv` transcripts.
    pub transcripts: PathBuf,
    /// Clip text embeddings keyed by clip id.
    pub clip_text_embeddings: PathBuf,
    /// Three frame embeddings per clip, ids `<clip>.f0` .. `<clip>.f2`. When
    /// absent they are sampled from `video_frames` at ingest.
    pub clip_frame_embeddings: Option<PathBuf>,
    /// Per-second frame embeddings, ids `<doc>@<second>`.
    pub video_frames: Option<PathBuf>,
    /// Narration embeddings keyed by the narration text itself. Texts not in
    /// the file fall back to feature hashing.
    pub narration_embeddings: Option<PathBuf>,
    /// Directory of scripts to fulfill, `<doc_id>.txt`.
    pub scripts: Option<PathBuf>,
    /// Reference scripts `<doc_id>.txt` and optional reference EDLs
    /// `<doc_id>.edl.csv`.
    pub references: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub narrator_rule: NarratorRule,
    pub chunks: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            narrator_rule: NarratorRule::WordCount,
            chunks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Extra training runs, one loss history per value of alpha.
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleConfig {
    pub narration_rate_wpm: f64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            narration_rate_wpm: DEFAULT_WPM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub variant: RetrievalVariant,
    pub paths: PathsConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    /// `seed` here is replaced by the top-level seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub assemble: AssembleConfig,
    #[serde(default)]
    pub metrics: MetricSettings,
}

impl PipelineConfig {
    /// Parses a config; relative paths are taken from `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let p = &mut cfg.paths;
        for path in [
            &mut p.transcripts,
            &mut p.clip_text_embeddings,
            &mut p.output,
        ] {
            *path = base_dir.join(&*path);
        }
        for path in [
            &mut p.clip_frame_embeddings,
            &mut p.video_frames,
            &mut p.narration_embeddings,
            &mut p.scripts,
            &mut p.references,
        ]
        .into_iter()
        .flatten()
        {
            *path = base_dir.join(&*path);
        }
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Settings that do not depend on any file.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.ingest.chunks == 0 {
            return Err(Error::Config("ingest.chunks must be at least 1".into()));
        }
        let wpm = self.assemble.narration_rate_wpm;
        if !(wpm.is_finite() && wpm > 0.0) {
            return Err(Error::Config(
                "assemble.narration_rate_wpm must be positive".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.metrics.scr_threshold) {
            return Err(Error::Config(
                "metrics.scr_threshold must lie in [-1, 1]".into(),
            ));
        }
        if self
            .sweep
            .alphas
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(Error::Config(
                "sweep.alphas must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.paths.output.join(rel)
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

fn require_some<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} must be set")))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Files in `dir` whose names end in `suffix`, sorted by name.
fn list_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File name with `suffix` removed.
fn stem(path: &Path, suffix: &str) -> String {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    name.strip_suffix(suffix).unwrap_or(name).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub documentaries: usize,
    pub clips: usize,
    pub samples: usize,
}

/// Reads transcripts and embeddings, writes `clips.tsv`, `samples.tsv`,
/// `narrators.tsv`, `chunks.tsv`, `clip_text.vec` and, when frames are
/// available, `clip_frames.vec`.
pub fn ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let p = &cfg.paths;
    require_dir(&p.transcripts, "transcript directory")?;
    require_file(&p.clip_text_embeddings, "clip text embedding file")?;
    for (path, what) in [
        (&p.clip_frame_embeddings, "clip frame file"),
        (&p.video_frames, "video frame file"),
    ] {
        if let Some(path) = path {
            require_file(path, what)?;
        }
    }

    let mut docs = Vec::new();
    for path in list_files(&p.transcripts, ".tsv")? {
        docs.push(load_transcript(&path)?);
    }
    if docs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no transcripts in {}",
            p.transcripts.display()
        )));
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for w in docs.windows(2) {
        if w[0].doc_id == w[1].doc_id {
            return Err(Error::DuplicateId(w[0].doc_id.clone()));
        }
    }
    let text_vecs = read_vector_file(&p.clip_text_embeddings)?.into_map();

    let mut clips = Vec::new();
    let mut samples = Vec::new();
    let mut narrators = String::from("#doc_id\tnarrator\n");
    let mut chunks = String::from("#doc_id\tchunk\ttext\n");
    for doc in &docs {
        let narrator = identify_narrator_with(doc, cfg.ingest.narrator_rule)?;
        let _ = writeln!(narrators, "{}\t{narrator}", doc.doc_id);
        for (i, c) in chunk_transcript(doc, cfg.ingest.chunks)?.iter().enumerate() {
            let _ = writeln!(chunks, "{}\t{i}\t{c}", doc.doc_id);
        }
        clips.extend(extract_quotable_clips(doc, &narrator));
        samples.extend(build_training_samples(doc, &narrator));
    }

    let dim = text_vecs.values().next().map_or(0, Vec::len);
    let mut clip_text = VectorFile::new(dim.max(1));
    for c in &clips {
        let v = text_vecs
            .get(&c.clip_id)
            .ok_or_else(|| Error::MissingEmbedding {
                clip_id: c.clip_id.clone(),
                what: "a text embedding".into(),
            })?;
        clip_text.push(&c.clip_id, v.clone())?;
    }
    let clip_frames = match (&p.clip_frame_embeddings, &p.video_frames) {
        (Some(path), _) => Some(select_listed_frames(&clips, &read_vector_file(path)?)?),
        (None, Some(path)) => Some(sample_clip_frames(
            &clips,
            &read_vector_file(path)?,
            cfg.seed,
        )?),
        (None, None) => None,
    };

    write(&cfg.out("clips.tsv"), format_clip_file(&clips)?)?;
    write(&cfg.out("samples.tsv"), format_sample_file(&samples)?)?;
    write(&cfg.out("narrators.tsv"), narrators)?;
    write(&cfg.out("chunks.tsv"), chunks)?;
    write(
        &cfg.out("clip_text.vec"),
        crate::embedding::io::format_vector_file(&clip_text)?,
    )?;
    if let Some(f) = clip_frames {
        write(
            &cfg.out("clip_frames.vec"),
            crate::embedding::io::format_vector_file(&f)?,
        )?;
    }
    Ok(IngestSummary {
        documentaries: docs.len(),
        clips: clips.len(),
        samples: samples.len(),
    })
}

fn frame_key(clip_id: &str, j: usize) -> String {
    format!("{clip_id}.f{j}")
}

fn select_listed_frames(clips: &[ClipRecord], file: &VectorFile) -> Result<VectorFile> {
    let mut out = VectorFile::new(file.dim);
    for c in clips {
        for j in 0..3 {
            let id = frame_key(&c.clip_id, j);
            let v = file
                .get(&id)
                .ok_or_else(|| Error::MissingFrame(id.clone()))?;
            out.push(id, v.to_vec())?;
        }
    }
    Ok(out)
}

/// Three frames per clip from the seconds the clip spans, drawn once with the
/// ingest seed. Clips shorter than three seconds repeat frames.
fn sample_clip_frames(clips: &[ClipRecord], video: &VectorFile, seed: u64) -> Result<VectorFile> {
    use rand::seq::index;
    use rand::Rng;
    let pools = frame_pools_from_vectors(video)?;
    let mut rng = stage_rng(seed, "ingest");
    let mut out = VectorFile::new(video.dim);
    for c in clips {
        let pool = pools
            .get(&c.doc_id)
            .ok_or_else(|| Error::MissingFrame(assembler::frame_id(&c.doc_id, 0)))?;
        let span = c.start_s.floor() as usize
            ..(c.end_s.ceil() as usize).max(c.start_s.floor() as usize + 1);
        if span.end > pool.len() {
            return Err(Error::MissingFrame(assembler::frame_id(
                &c.doc_id,
                span.end - 1,
            )));
        }
        let n = span.len();
        let picks: Vec<usize> = if n >= 3 {
            let mut p: Vec<usize> = index::sample(&mut rng, n, 3).into_vec();
            p.sort_unstable();
            p
        } else {
            (0..3).map(|_| rng.random_range(0..n)).collect()
        };
        for (j, k) in picks.into_iter().enumerate() {
            out.push(
                frame_key(&c.clip_id, j),
                pool.frames[span.start + k].clone(),
            )?;
        }
    }
    Ok(out)
}

/// Clips from `clips.tsv` with embeddings attached from the ingest outputs.
pub fn load_ingested_clips(cfg: &PipelineConfig) -> Result<Vec<ClipRecord>> {
    let path = cfg.out("clips.tsv");
    let mut clips = parse_clip_file(&read(&path)?, &path.display().to_string())?;
    let text = read_vector_file(&cfg.out("clip_text.vec"))?.into_map();
    let frames_path = cfg.out("clip_frames.vec");
    let frames = if frames_path.is_file() {
        Some(read_vector_file(&frames_path)?.into_map())
    } else {
        None
    };
    for c in &mut clips {
        c.text_embedding = text.get(&c.clip_id).cloned();
        if let Some(f) = &frames {
            let get = |j| f.get(&frame_key(&c.clip_id, j)).cloned();
            if let (Some(a), Some(b), Some(d)) = (get(0), get(1), get(2)) {
                c.frame_embeddings = Some([a, b, d]);
            }
        }
    }
    Ok(clips)
}

fn load_samples(cfg: &PipelineConfig) -> Result<Vec<TrainingSample>> {
    let path = cfg.out("samples.tsv");
    parse_sample_file(&read(&path)?, &path.display().to_string())
}

/// Narration embedder: the narration file when configured, with feature
/// hashing as fallback, at the clip text dimension.
pub fn narration_embedder(
    cfg: &PipelineConfig,
    dim: usize,
) -> Result<LookupEmbedder<HashingEmbedder>> {
    let table = match &cfg.paths.narration_embeddings {
        Some(p) => read_vector_file(p)?.into_map(),
        None => HashMap::new(),
    };
    LookupEmbedder::new(
        table,
        HashingEmbedder::new(dim, derive_seed(cfg.seed, "hashing")),
    )
}

fn text_dim(clips: &[ClipRecord]) -> Result<usize> {
    clips
        .iter()
        .find_map(|c| c.text_embedding.as_ref().map(Vec::len))
        .ok_or_else(|| Error::EmptyInput("clips with text embeddings".into()))
}

fn frame_dim(clips: &[ClipRecord]) -> usize {
    clips
        .iter()
        .find_map(|c| c.frame_embeddings.as_ref().map(|f| f[0].len()))
        .unwrap_or(0)
}

fn format_history(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,best_val_loss\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            h.epoch, h.train_loss, h.val_loss, h.best_val_loss
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_val_loss: f64,
    pub sweep_files: Vec<PathBuf>,
}

/// Trains on the ingested corpus; writes `model/` and `loss_history.csv`,
/// plus `loss_history_alpha<α>.csv` for each sweep value.
pub fn train_model(cfg: &PipelineConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    for f in ["clips.tsv", "samples.tsv", "clip_text.vec"] {
        require_file(&cfg.out(f), "ingest output")?;
    }
    let clips = load_ingested_clips(cfg)?;
    let samples = load_samples(cfg)?;
    let dim = text_dim(&clips)?;
    let embedder = narration_embedder(cfg, dim)?;
    let run = |alpha: f64| {
        let mut tc = cfg.train.clone();
        tc.alpha = alpha;
        let init = RetrievalModel::init(
            cfg.variant,
            dim,
            dim,
            frame_dim(&clips),
            tc.hidden_dim,
            &mut stage_rng(cfg.seed, "init"),
        );
        train(init, &samples, &clips, &embedder, &tc)
    };
    let main = run(cfg.train.alpha)?;
    let mut sweep = Vec::new();
    for &a in &cfg.sweep.alphas {
        sweep.push((a, run(a)?));
    }
    save_model(&cfg.out("model"), &main.model)?;
    write(&cfg.out("loss_history.csv"), format_history(&main.history))?;
    let mut sweep_files = Vec::new();
    for (a, outcome) in sweep {
        let path = cfg.out(&format!("loss_history_alpha{a}.csv"));
        write(&path, format_history(&outcome.history))?;
        sweep_files.push(path);
    }
    Ok(TrainSummary {
        epochs: main.history.len(),
        best_val_loss: main.history.last().map_or(f64::NAN, |h| h.best_val_loss),
        sweep_files,
    })
}

/// The trained model, or for the text-only variant without training, an
/// encoder that adds the two narration embeddings.
fn model_for_retrieval(cfg: &PipelineConfig, dim: usize) -> Result<RetrievalModel> {
    let dir = cfg.out("model");
    if dir.join("model.toml").is_file() {
        let m = load_model(&dir)?;
        if m.variant != cfg.variant {
            return Err(Error::Config(format!(
                "trained model is {} but the run asks for {}",
                m.variant.name(),
                cfg.variant.name()
            )));
        }
        return Ok(m);
    }
    match cfg.variant {
        RetrievalVariant::T => Ok(RetrievalModel {
            variant: RetrievalVariant::T,
            encoder: QueryEncoder::sum_of_sides(dim)
                .with_context(cfg.train.max_context_tokens, cfg.train.sum_token_position),
            head: None,
        }),
        RetrievalVariant::Tv => Err(Error::Config(format!(
            "no trained TV model in {}",
            dir.display()
        ))),
    }
}

/// Clips of `doc_id` when it has any, otherwise the whole pool.
fn doc_pool(pool: &CandidatePool, doc_id: &str) -> CandidatePool {
    let p = pool.restrict_to_doc(doc_id);
    if p.is_empty() {
        pool.clone()
    } else {
        p
    }
}

fn format_rankings(rankings: &BTreeMap<usize, RetrievalResult>) -> String {
    let mut s = String::from("element_index,rank,clip_id,score\n");
    for (i, r) in rankings {
        for (rank, (id, score)) in r.ranked.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{id},{score:?}", rank + 1);
        }
    }
    s
}

fn parse_rankings(input: &str, origin: &str) -> Result<BTreeMap<usize, RetrievalResult>> {
    let mut out: BTreeMap<usize, RetrievalResult> = BTreeMap::new();
    for (n, line) in input.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::parse(origin, n + 1, "expected element_index,rank,clip_id,score");
        if f.len() != 4 {
            return Err(bad());
        }
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let rank: usize = f[1].parse().map_err(|_| bad())?;
        let score: f64 = f[3].parse().map_err(|_| bad())?;
        let r = out.entry(i).or_insert_with(|| RetrievalResult {
            query_id: String::new(),
            ranked: Vec::new(),
        });
        if rank != r.ranked.len() + 1 {
            return Err(Error::parse(
                origin,
                n + 1,
                "ranks must run 1, 2, … per element",
            ));
        }
        r.ranked.push((f[2].to_string(), score));
    }
    Ok(out)
}

pub fn fulfilled_path(cfg: &PipelineConfig, doc: &str) -> PathBuf {
    cfg.out(&format!("retrieved/{doc}.fulfilled.txt"))
}

pub fn rankings_path(cfg: &PipelineConfig, doc: &str) -> PathBuf {
    cfg.out(&format!("retrieved/{doc}.rankings.csv"))
}

pub fn edl_path(cfg: &PipelineConfig, doc: &str) -> PathBuf {
    cfg.out(&format!("edl/{doc}.edl.csv"))
}

/// Loads a script file. The file stem is the documentary id.
pub fn load_script(path: &Path) -> Result<Script> {
    let text = read(path)?;
    let doc = stem(path, ".txt");
    let doc = doc.strip_suffix(".fulfilled").unwrap_or(&doc).to_string();
    Ok(parse(&text, detect_encoding(&text))?.with_doc_id(doc))
}

/// Fulfills one script; writes the direct-quote form and the per-quote
/// rankings under `retrieved/`.
pub fn retrieve(cfg: &PipelineConfig, script_path: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    require_file(script_path, "script")?;
    for f in ["clips.tsv", "clip_text.vec"] {
        require_file(&cfg.out(f), "ingest output")?;
    }
    let script = load_script(script_path)?;
    let clips = load_ingested_clips(cfg)?;
    let dim = text_dim(&clips)?;
    let model = model_for_retrieval(cfg, dim)?;
    let embedder = narration_embedder(cfg, dim)?;
    let pool = doc_pool(&CandidatePool::for_model(clips, &model)?, &script.doc_id);
    let f = fulfill_quotes(&script, &pool, &model, &embedder)?;
    let out = fulfilled_path(cfg, &script.doc_id);
    write(&out, serialize_as(&f.script, Encoding::Dq)? + "\n")?;
    write(
        &rankings_path(cfg, &script.doc_id),
        format_rankings(&f.rankings),
    )?;
    Ok(out)
}

fn load_frame_pools(cfg: &PipelineConfig) -> Result<BTreeMap<String, FramePool>> {
    let path = require_some(&cfg.paths.video_frames, "video_frames")?;
    frame_pools_from_vectors(&read_vector_file(path)?)
}

/// Resolves a direct-quote script's clips from its rankings file, or by
/// nearest transcript when there is none.
fn resolve_for_assembly(
    cfg: &PipelineConfig,
    script: Script,
    pool: &CandidatePool,
    embedder: &dyn TextEmbedder,
) -> Result<(Script, BTreeMap<usize, RetrievalResult>)> {
    let rpath = rankings_path(cfg, &script.doc_id);
    if !rpath.is_file() {
        let model = RetrievalModel {
            variant: RetrievalVariant::T,
            encoder: QueryEncoder::sum_of_sides(embedder.dim()),
            head: None,
        };
        let f = fulfill_quotes(&script, pool, &model, embedder)?;
        return Ok((f.script, f.rankings));
    }
    let rankings = parse_rankings(&read(&rpath)?, &rpath.display().to_string())?;
    let quotes: Vec<usize> = (0..script.elements.len())
        .filter(|&i| script.elements[i].is_quote())
        .collect();
    if quotes != rankings.keys().copied().collect::<Vec<_>>() {
        return Err(Error::Misaligned(format!(
            "{} ranks elements {:?} but the script has quotes at {:?}",
            rpath.display(),
            rankings.keys().collect::<Vec<_>>(),
            quotes
        )));
    }
    let mut script = script;
    for (&i, r) in &rankings {
        if let ScriptElement::DirectQuote {
            resolved_clip_id, ..
        } = &mut script.elements[i]
        {
            *resolved_clip_id = r.top().map(str::to_string);
        }
    }
    Ok((script, rankings))
}

/// Builds the EDL for a fulfilled script under `edl/`.
pub fn assemble(cfg: &PipelineConfig, fulfilled: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    require_file(fulfilled, "fulfilled script")?;
    require_file(
        require_some(&cfg.paths.video_frames, "video_frames")?,
        "video frame file",
    )?;
    let text = read(fulfilled)?;
    let doc = stem(fulfilled, ".txt");
    let doc = doc.strip_suffix(".fulfilled").unwrap_or(&doc).to_string();
    let script = parse_dq(&text)?.with_doc_id(&doc);
    let clips = load_ingested_clips(cfg)?;
    let dim = text_dim(&clips)?;
    let embedder = narration_embedder(cfg, dim)?;
    let pool = doc_pool(
        &crate::retriever::build_pool(clips, None, RetrievalVariant::T)?,
        &doc,
    );
    let (script, rankings) = resolve_for_assembly(cfg, script, &pool, &embedder)?;
    let frames = load_frame_pools(cfg)?;
    let frame_pool = frames
        .get(&doc)
        .ok_or_else(|| Error::MissingFrame(assembler::frame_id(&doc, 0)))?;
    let timeline = assembler::assemble(
        &script,
        &pool,
        &rankings,
        frame_pool,
        &CosineScorer(&embedder),
        cfg.assemble.narration_rate_wpm,
    )?;
    let out = edl_path(cfg, &doc);
    write(&out, assembler::format_edl(&timeline)?)?;
    Ok(out)
}

/// Recall at k = 1..=10 on the ingested samples, each against its own
/// documentary's clips.
fn sample_recall(
    cfg: &PipelineConfig,
    model: &RetrievalModel,
    clips: Vec<ClipRecord>,
    embedder: &dyn TextEmbedder,
) -> Result<Vec<(usize, f64)>> {
    let samples = load_samples(cfg)?;
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let pool = CandidatePool::for_model(clips, model)?;
    let mut pools: BTreeMap<String, CandidatePool> = BTreeMap::new();
    let mut results = Vec::new();
    let mut truth = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let p = pools
            .entry(s.doc_id.clone())
            .or_insert_with(|| doc_pool(&pool, &s.doc_id));
        let h = model
            .encoder
            .encode(&s.prev_narration, &s.next_narration, embedder)?;
        let qid = format!("q{i}");
        results.push(retrieve_top_k_as(&qid, &h, p, p.len())?);
        truth.insert(qid, s.positive_clip_id.clone());
    }
    (1..=10)
        .map(|k| Ok((k, recall_at_k(&results, &truth, k)?)))
        .collect()
}

fn series(points: impl IntoIterator<Item = (String, String)>) -> String {
    points
        .into_iter()
        .map(|(x, y)| format!("{x}\t{y}\n"))
        .collect()
}

/// Scores every EDL under `edl/` against the references; writes
/// `report.csv` and two-column series under `plots/`.
pub fn evaluate(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let refs = require_some(&cfg.paths.references, "references")?;
    require_dir(refs, "reference directory")?;
    require_dir(&cfg.out("edl"), "EDL directory")?;
    require_file(
        require_some(&cfg.paths.video_frames, "video_frames")?,
        "video frame file",
    )?;

    let clips = load_ingested_clips(cfg)?;
    let dim = text_dim(&clips)?;
    let embedder = narration_embedder(cfg, dim)?;
    let frames = load_frame_pools(cfg)?;
    let mut rows = Vec::new();
    for edl in list_files(&cfg.out("edl"), ".edl.csv")? {
        let doc = stem(&edl, ".edl.csv");
        let timeline = assembler::import_timeline(&edl, &doc)?;
        let script = load_script(&fulfilled_path(cfg, &doc))?;
        let reference = load_script(&refs.join(format!("{doc}.txt")))?;
        let ref_edl = refs.join(format!("{doc}.edl.csv"));
        let reference_timeline = if ref_edl.is_file() {
            Some(assembler::import_timeline(&ref_edl, &doc)?)
        } else {
            None
        };
        let base: Vec<&str> = clips
            .iter()
            .filter(|c| c.doc_id == doc)
            .map(|c| c.transcript.as_str())
            .collect();
        let report = evaluate_document(
            DocumentInputs {
                script: &script,
                reference_script: &reference,
                timeline: &timeline,
                reference_timeline: reference_timeline.as_ref(),
                interview_base: &base,
                frames: &frames,
            },
            &cfg.metrics,
            &embedder,
        )?;
        rows.push((doc, report));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no EDLs in {}",
            cfg.out("edl").display()
        )));
    }
    let out = cfg.out("report.csv");
    write(&out, format_report_csv(&rows)?)?;

    if cfg.out("model").join("model.toml").is_file() || cfg.variant == RetrievalVariant::T {
        let model = model_for_retrieval(cfg, dim)?;
        let recall = sample_recall(cfg, &model, clips, &embedder)?;
        write(
            &cfg.out("plots/recall_at_k.tsv"),
            series(
                recall
                    .into_iter()
                    .map(|(k, r)| (k.to_string(), r.to_string())),
            ),
        )?;
    }
    let hist = cfg.out("loss_history.csv");
    if hist.is_file() {
        let text = read(&hist)?;
        let rows: Vec<Vec<&str>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        for (name, col) in [("loss_train.tsv", 1), ("loss_val.tsv", 2)] {
            let pts = rows
                .iter()
                .filter(|r| r.len() == 4)
                .map(|r| (r[0].to_string(), r[col].to_string()));
            write(&cfg.out(&format!("plots/{name}")), series(pts))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ingest: IngestSummary,
    pub train: Option<TrainSummary>,
    pub fulfilled: Vec<PathBuf>,
    pub edls: Vec<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Scripts under `paths.scripts`, sorted.
pub fn configured_scripts(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = require_some(&cfg.paths.scripts, "scripts")?;
    require_dir(dir, "script directory")?;
    list_files(dir, ".txt")
}

/// Fulfilled scripts written by [`retrieve`], sorted.
pub fn fulfilled_scripts(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.out("retrieved");
    require_dir(&dir, "retrieval output directory")?;
    list_files(&dir, ".fulfilled.txt")
}

/// Every stage in order over the scripts in `paths.scripts`. Training runs
/// for the TV variant, or for T when `train_text_only` is set; evaluation
/// runs when references are configured.
pub fn run_all(cfg: &PipelineConfig, train_text_only: bool) -> Result<RunSummary> {
    cfg.validate()?;
    let scripts = configured_scripts(cfg)?;
    let ingest_summary = ingest(cfg)?;
    let train_summary = if cfg.variant == RetrievalVariant::Tv || train_text_only {
        Some(train_model(cfg)?)
    } else {
        None
    };
    let mut fulfilled = Vec::new();
    let mut edls = Vec::new();
    for script in scripts {
        let f = retrieve(cfg, &script)?;
        edls.push(assemble(cfg, &f)?);
        fulfilled.push(f);
    }
    let report = if cfg.paths.references.is_some() {
        Some(evaluate(cfg)?)
    } else {
        None
    };
    Ok(RunSummary {
        ingest: ingest_summary,
        train: train_summary,
        fulfilled,
        edls,
        report,
    })
}

/// Config written next to a demo corpus, less its leading `seed` line.
pub const DEMO_CONFIG: &str = "\
variant = \"TV\"

[paths]
transcripts = \"transcripts\"
clip_text_embeddings = \"embeddings/clip_text.vec\"
video_frames = \"embeddings/frames.vec\"
narration_embeddings = \"embeddings/narration.vec\"
scripts = \"scripts\"
references = \"references\"
output = \"out\"

[train]
learning_rate = 0.5
batch_size = 8
max_epochs = 60
patience = 10
validation_fraction = 0.25

[sweep]
alphas = [0.0, 0.5, 1.0, 2.0]
";

/// Writes a small synthetic corpus with a ready-to-run `quotereel.toml`.
/// Returns the config path.
pub fn write_demo_corpus(dir: &Path, demo: &DemoConfig) -> Result<PathBuf> {
    let corpus = generate_demo(demo)?;
    for doc in &corpus.documentaries {
        write(
            &dir.join(format!("transcripts/{}.tsv", doc.doc_id)),
            format_transcript(doc),
        )?;
    }
    let vec_file = |entries: Vec<(String, Vec<f64>)>| {
        let mut f = VectorFile::new(demo.dim);
        for (id, v) in entries {
            f.push(id, v)?;
        }
        Ok::<_, Error>(f)
    };
    std::fs::create_dir_all(dir.join("embeddings")).map_err(|e| Error::io(dir, e))?;
    write_vector_file(
        &dir.join("embeddings/clip_text.vec"),
        &vec_file(corpus.clip_text.clone().into_iter().collect())?,
    )?;
    write_vector_file(
        &dir.join("embeddings/narration.vec"),
        &vec_file(corpus.narration.clone().into_iter().collect())?,
    )?;
    write_vector_file(
        &dir.join("embeddings/frames.vec"),
        &vec_file(
            corpus
                .frames
                .iter()
                .map(|((d, s), v)| (assembler::frame_id(d, *s), v.clone()))
                .collect(),
        )?,
    )?;

    let table: HashMap<String, Vec<f64>> = corpus.narration.clone().into_iter().collect();
    let embedder = LookupEmbedder::new(table, HashingEmbedder::new(demo.dim, 0))?;
    let mut frame_vecs = VectorFile::new(demo.dim);
    for ((d, s), v) in &corpus.frames {
        frame_vecs.push(assembler::frame_id(d, *s), v.clone())?;
    }
    let pools = frame_pools_from_vectors(&frame_vecs)?;
    for (doc, (script, reference)) in corpus
        .documentaries
        .iter()
        .zip(corpus.scripts.iter().zip(&corpus.references))
    {
        write(
            &dir.join(format!("scripts/{}.txt", doc.doc_id)),
            serialize_as(script, Encoding::Idq)? + "\n",
        )?;
        write(
            &dir.join(format!("references/{}.txt", doc.doc_id)),
            serialize_as(reference, Encoding::Dq)? + "\n",
        )?;
        let mut clips = extract_quotable_clips(doc, "narrator");
        for c in &mut clips {
            c.text_embedding = corpus.clip_text.get(&c.clip_id).cloned();
        }
        let pool = crate::retriever::build_pool(clips, None, RetrievalVariant::T)?;
        let t = assembler::assemble(
            reference,
            &pool,
            &BTreeMap::new(),
            &pools[&doc.doc_id],
            &CosineScorer(&embedder),
            DEFAULT_WPM,
        )?;
        write(
            &dir.join(format!("references/{}.edl.csv", doc.doc_id)),
            assembler::format_edl(&t)?,
        )?;
    }
    let config = dir.join("quotereel.toml");
    write(&config, format!("seed = {}\n{DEMO_CONFIG}", demo.seed))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml(
            "seed = 3\n[paths]\ntranscripts = \"t\"\nclip_text_embeddings = \"c.vec\"\noutput = \"o\"\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.variant, RetrievalVariant::Tv);
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.paths.output, Path::new("/base/o"));
        assert_eq!(cfg.train.learning_rate, 1e-5);
        assert_eq!(cfg.assemble.narration_rate_wpm, 150.0);
        cfg.validate().unwrap();
        assert!(PipelineConfig::from_toml("bogus = 1\n", Path::new(".")).is_err());
        let bad = PipelineConfig::from_toml(
            "[paths]\ntranscripts = \"t\"\nclip_text_embeddings = \"c\"\noutput = \"o\"\n[train]\nbatch_size = 0\n",
            Path::new("."),
        )
        .unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn demo_config_parses() {
        let cfg = PipelineConfig::from_toml(DEMO_CONFIG, Path::new(".")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sweep.alphas, vec![0.0, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn rankings_roundtrip() {
        let r = BTreeMap::from([(
            1,
            RetrievalResult {
                query_id: String::new(),
                ranked: vec![("a".into(), 0.5), ("b".into(), -0.25)],
            },
        )]);
        assert_eq!(parse_rankings(&format_rankings(&r), "r").unwrap(), r);
    }
}
