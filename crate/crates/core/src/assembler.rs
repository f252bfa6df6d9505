//! Teaser timelines: narration over matched footage, quote clips inserted
//! verbatim, with a sliding-window ban on reusing recent selections.
//!
//! Footage is addressed at one frame per second, so frame `s` of a
//! documentary covers `[s, s + 1)`.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;
use std::path::Path;

use crate::embedding::io::VectorFile;
use crate::embedding::query::TextEmbedder;
use crate::embedding::vector::{check_dims, cosine_similarity, norm};
use crate::error::{Error, Result};
use crate::retriever::{CandidatePool, RetrievalResult};
use crate::script::{Script, ScriptElement};
use crate::text::word_count;

pub const DEFAULT_WPM: f64 = 150.0;
/// How many previous selections a new one must differ from.
pub const DEDUP_WINDOW: usize = 3;

pub const EDL_HEADER: [&str; 6] = [
    "kind",
    "source_doc",
    "clip_or_start",
    "end",
    "duration_s",
    "text",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Narration,
    Quote,
}

impl EntryKind {
    pub fn name(self) -> &'static str {
        match self {
            EntryKind::Narration => "narration",
            EntryKind::Quote => "quote",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub kind: EntryKind,
    pub source_doc: String,
    /// Set for quote entries.
    pub clip_id: Option<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub duration_s: f64,
    pub text: String,
}

/// What an entry reuses from the source material, for dedup.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Selection {
    Clip(String),
    Interval {
        doc: String,
        start: usize,
        end: usize,
    },
}

impl TimelineEntry {
    /// Whole-second frames the entry shows.
    pub fn frames(&self) -> Range<usize> {
        let start = (self.start_s + 1e-6).floor().max(0.0) as usize;
        let end = (self.end_s - 1e-6).ceil().max(0.0) as usize;
        start..end.max(start + 1)
    }

    pub fn selection(&self) -> Selection {
        match &self.clip_id {
            Some(id) => Selection::Clip(id.clone()),
            None => {
                let f = self.frames();
                Selection::Interval {
                    doc: self.source_doc.clone(),
                    start: f.start,
                    end: f.end,
                }
            }
        }
    }

    fn quote(clip: &crate::corpus::ClipRecord) -> Self {
        let duration_s = clip.end_s - clip.start_s;
        TimelineEntry {
            kind: EntryKind::Quote,
            source_doc: clip.doc_id.clone(),
            clip_id: Some(clip.clip_id.clone()),
            // derived the same way on import so EDL round trips are exact
            start_s: clip.end_s - duration_s,
            end_s: clip.end_s,
            duration_s,
            text: clip.transcript.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeaserTimeline {
    pub doc_id: String,
    pub entries: Vec<TimelineEntry>,
    pub total_duration_s: f64,
}

/// One frame of a timeline with the entry it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub entry: usize,
    pub doc: String,
    pub second: usize,
}

impl TeaserTimeline {
    pub fn new(doc_id: impl Into<String>, entries: Vec<TimelineEntry>) -> Self {
        let total_duration_s = entries.iter().map(|e| e.duration_s).sum();
        Self {
            doc_id: doc_id.into(),
            entries,
            total_duration_s,
        }
    }

    pub fn frames(&self) -> Vec<FrameRef> {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(i, e)| {
                e.frames().map(move |second| FrameRef {
                    entry: i,
                    doc: e.source_doc.clone(),
                    second,
                })
            })
            .collect()
    }
}

pub fn frame_id(doc: &str, second: usize) -> String {
    format!("{doc}@{second}")
}

/// Per-second frame embeddings of one documentary.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePool {
    pub doc_id: String,
    pub frames: Vec<Vec<f64>>,
}

impl FramePool {
    pub fn new(doc_id: impl Into<String>, frames: Vec<Vec<f64>>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyFramePool)?;
        for f in &frames {
            check_dims(first.len(), f.len())?;
        }
        Ok(Self {
            doc_id: doc_id.into(),
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, second: usize) -> Option<&[f64]> {
        self.frames.get(second).map(Vec::as_slice)
    }
}

/// Splits a vector file with `doc@second` ids into per-documentary pools.
/// Every documentary must cover seconds `0..n` without gaps.
pub fn frame_pools_from_vectors(file: &VectorFile) -> Result<BTreeMap<String, FramePool>> {
    let mut by_doc: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (id, v) in &file.entries {
        let (doc, sec) = id
            .rsplit_once('@')
            .and_then(|(d, s)| Some((d, s.parse::<usize>().ok()?)))
            .ok_or_else(|| {
                Error::Config(format!("frame id {id:?} is not of the form doc@second"))
            })?;
        by_doc
            .entry(doc.to_string())
            .or_default()
            .insert(sec, v.clone());
    }
    by_doc
        .into_iter()
        .map(|(doc, frames)| {
            if let Some(gap) = frames
                .keys()
                .enumerate()
                .find(|(i, s)| i != *s)
                .map(|(i, _)| i)
            {
                return Err(Error::MissingFrame(frame_id(&doc, gap)));
            }
            let pool = FramePool::new(doc.clone(), frames.into_values().collect())?;
            Ok((doc, pool))
        })
        .collect()
}

/// Scores every frame of a pool against a narration sentence.
pub trait HighlightScorer {
    fn score_frames(&self, narration: &str, frames: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// Cosine between the narration's text embedding and each frame. Anything
/// with zero norm scores 0.
#[derive(Debug, Clone)]
pub struct CosineScorer<E>(pub E);

impl<E: TextEmbedder> HighlightScorer for CosineScorer<E> {
    fn score_frames(&self, narration: &str, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        let q = self.0.embed(narration);
        let zero = norm(&q) == 0.0;
        frames
            .iter()
            .map(|f| {
                check_dims(q.len(), f.len())?;
                if zero || norm(f) == 0.0 {
                    Ok(0.0)
                } else {
                    cosine_similarity(&q, f)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInterval {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Mean frame score.
    pub score: f64,
}

/// Every window of `window` consecutive frames, best mean score first, ties
/// to the earlier start.
pub fn rank_narration_intervals(scores: &[f64], window: usize) -> Result<Vec<FrameInterval>> {
    if scores.is_empty() {
        return Err(Error::EmptyFramePool);
    }
    if window == 0 || window > scores.len() {
        return Err(Error::WindowTooLong {
            window,
            frames: scores.len(),
        });
    }
    let mut out: Vec<FrameInterval> = (0..=scores.len() - window)
        .map(|s| FrameInterval {
            start: s,
            end: s + window,
            score: scores[s..s + window].iter().sum::<f64>() / window as f64,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
    Ok(out)
}

pub fn match_narration_visuals(
    narration: &str,
    frames: &FramePool,
    scorer: &dyn HighlightScorer,
    window_s: usize,
) -> Result<FrameInterval> {
    let scores = scorer.score_frames(narration, &frames.frames)?;
    Ok(rank_narration_intervals(&scores, window_s)?[0])
}

pub fn narration_duration_s(text: &str, wpm: f64) -> f64 {
    word_count(text) as f64 / wpm * 60.0
}

/// Footage window for a narration: its duration rounded up to whole seconds.
pub fn visual_window_s(duration_s: f64) -> usize {
    ((duration_s - 1e-9).ceil() as usize).max(1)
}

struct RecentSelections(VecDeque<Selection>);

impl RecentSelections {
    fn contains(&self, s: &Selection) -> bool {
        self.0.contains(s)
    }

    fn push(&mut self, s: Selection) {
        if self.0.len() == DEDUP_WINDOW {
            self.0.pop_front();
        }
        self.0.push_back(s);
    }
}

/// Builds the timeline for a fulfilled script.
///
/// `rankings` holds the candidate order behind each quote (keyed by element
/// index); a quote without one can only use its resolved clip. Narration
/// footage is cut from `frames`, which must belong to the script's
/// documentary. Windows longer than the footage are shortened to fit it.
pub fn assemble(
    script: &Script,
    pool: &CandidatePool,
    rankings: &BTreeMap<usize, RetrievalResult>,
    frames: &FramePool,
    scorer: &dyn HighlightScorer,
    wpm: f64,
) -> Result<TeaserTimeline> {
    if !(wpm.is_finite() && wpm > 0.0) {
        return Err(Error::Config("narration rate must be positive".into()));
    }
    if frames.is_empty() {
        return Err(Error::EmptyFramePool);
    }
    let mut recent = RecentSelections(VecDeque::with_capacity(DEDUP_WINDOW));
    let mut entries = Vec::with_capacity(script.elements.len());
    for (i, el) in script.elements.iter().enumerate() {
        let entry = match el {
            ScriptElement::QuotePlaceholder => return Err(Error::UnresolvedPlaceholder(i)),
            ScriptElement::DirectQuote {
                resolved_clip_id: None,
                ..
            } => return Err(Error::UnresolvedPlaceholder(i)),
            ScriptElement::DirectQuote {
                resolved_clip_id: Some(resolved),
                ..
            } => {
                let ranked = rankings
                    .get(&i)
                    .into_iter()
                    .flat_map(|r| r.ids())
                    .filter(|id| id != resolved);
                let chosen = std::iter::once(resolved.as_str())
                    .chain(ranked)
                    .find(|id| !recent.contains(&Selection::Clip(id.to_string())))
                    .ok_or(Error::DedupExhausted(i))?;
                let clip = pool
                    .get(chosen)
                    .ok_or_else(|| Error::MissingClip(chosen.to_string()))?;
                TimelineEntry::quote(clip)
            }
            ScriptElement::Narration(text) => {
                let duration_s = narration_duration_s(text, wpm);
                let window = visual_window_s(duration_s).min(frames.len());
                let scores = scorer.score_frames(text, &frames.frames)?;
                let best = rank_narration_intervals(&scores, window)?
                    .into_iter()
                    .find(|iv| {
                        !recent.contains(&Selection::Interval {
                            doc: frames.doc_id.clone(),
                            start: iv.start,
                            end: iv.end,
                        })
                    })
                    .ok_or(Error::DedupExhausted(i))?;
                TimelineEntry {
                    kind: EntryKind::Narration,
                    source_doc: frames.doc_id.clone(),
                    clip_id: None,
                    start_s: best.start as f64,
                    end_s: best.end as f64,
                    duration_s,
                    text: text.clone(),
                }
            }
        };
        recent.push(entry.selection());
        entries.push(entry);
    }
    Ok(TeaserTimeline::new(script.doc_id.clone(), entries))
}

fn csv_error(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(origin, line, e.to_string())
}

/// Edit decision list as CSV. Quote rows carry the clip id in
/// `clip_or_start`; narration rows carry the footage start second.
pub fn format_edl(timeline: &TeaserTimeline) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("writing EDL: {e}"));
    w.write_record(EDL_HEADER).map_err(io)?;
    for e in &timeline.entries {
        let first = match (&e.kind, &e.clip_id) {
            (EntryKind::Quote, Some(id)) => id.clone(),
            (EntryKind::Quote, None) => {
                return Err(Error::Config("quote entry without clip id".into()))
            }
            (EntryKind::Narration, _) => format!("{:?}", e.start_s),
        };
        w.write_record([
            e.kind.name(),
            &e.source_doc,
            &first,
            &format!("{:?}", e.end_s),
            &format!("{:?}", e.duration_s),
            &e.text,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 fields"))
}

pub fn parse_edl(input: &str, doc_id: &str, origin: &str) -> Result<TeaserTimeline> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input.as_bytes());
    let header = r.headers().map_err(|e| csv_error(origin, e))?;
    if header.iter().ne(EDL_HEADER) {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header {}", EDL_HEADER.join(",")),
        ));
    }
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(origin, line, format!("`{}` is not a number", &rec[i])))
        };
        let end_s = num(3)?;
        let duration_s = num(4)?;
        if duration_s <= 0.0 {
            return Err(Error::parse(origin, line, "duration must be positive"));
        }
        let (kind, clip_id, start_s) = match &rec[0] {
            "narration" => (EntryKind::Narration, None, num(2)?),
            "quote" => (
                EntryKind::Quote,
                Some(rec[2].to_string()),
                end_s - duration_s,
            ),
            other => {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("unknown entry kind `{other}`"),
                ))
            }
        };
        entries.push(TimelineEntry {
            kind,
            source_doc: rec[1].to_string(),
            clip_id,
            start_s,
            end_s,
            duration_s,
            text: rec[5].to_string(),
        });
    }
    Ok(TeaserTimeline::new(doc_id, entries))
}

pub fn export_timeline(timeline: &TeaserTimeline, path: &Path) -> Result<()> {
    std::fs::write(path, format_edl(timeline)?).map_err(|e| Error::io(path, e))
}

pub fn import_timeline(path: &Path, doc_id: &str) -> Result<TeaserTimeline> {
    let input = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edl(&input, doc_id, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ClipRecord;
    use crate::embedding::model::RetrievalVariant;
    use crate::embedding::HashingEmbedder;
    use crate::retriever::build_pool;
    use crate::script::Encoding;

    struct Fixed(Vec<f64>);

    impl HighlightScorer for Fixed {
        fn score_frames(&self, _: &str, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
            Ok(self.0.iter().copied().cycle().take(frames.len()).collect())
        }
    }

    fn pool(n: usize) -> CandidatePool {
        let clips = (0..n)
            .map(|i| {
                let mut c = ClipRecord::new(
                    format!("c{i}"),
                    "doc",
                    i as f64 * 10.0,
                    i as f64 * 10.0 + 4.5,
                    format!("quote {i}"),
                );
                c.text_embedding = Some(vec![1.0, i as f64]);
                c
            })
            .collect();
        build_pool(clips, None, RetrievalVariant::T).unwrap()
    }

    fn flat_frames(n: usize) -> FramePool {
        FramePool::new("doc", vec![vec![1.0, 0.0]; n]).unwrap()
    }

    fn resolved(id: &str) -> ScriptElement {
        ScriptElement::DirectQuote {
            text: "q".into(),
            resolved_clip_id: Some(id.into()),
        }
    }

    fn ranking(ids: &[&str]) -> RetrievalResult {
        RetrievalResult {
            query_id: String::new(),
            ranked: ids.iter().map(|i| (i.to_string(), 0.0)).collect(),
        }
    }

    fn script(elements: Vec<ScriptElement>) -> Script {
        Script {
            doc_id: "doc".into(),
            elements,
            encoding: Encoding::Idq,
        }
    }

    #[test]
    fn identical_frame_wins_with_unit_window() {
        let frames =
            FramePool::new("doc", vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        struct Q;
        impl TextEmbedder for Q {
            fn dim(&self) -> usize {
                2
            }
            fn embed(&self, _: &str) -> Vec<f64> {
                vec![1.0, 0.0]
            }
        }
        let iv = match_narration_visuals("x", &frames, &CosineScorer(Q), 1).unwrap();
        assert_eq!((iv.start, iv.end, iv.score), (1, 2, 1.0));
    }

    #[test]
    fn flat_scores_pick_first_window() {
        let iv = match_narration_visuals("x", &flat_frames(10), &Fixed(vec![0.3]), 4).unwrap();
        assert_eq!((iv.start, iv.end), (0, 4));
        assert!(matches!(
            match_narration_visuals("x", &flat_frames(3), &Fixed(vec![0.3]), 4),
            Err(Error::WindowTooLong {
                window: 4,
                frames: 3
            })
        ));
    }

    #[test]
    fn order_is_preserved() {
        let s = script(vec![
            ScriptElement::narration("one two"),
            resolved("c1"),
            ScriptElement::narration("three"),
        ]);
        let t = assemble(
            &s,
            &pool(3),
            &BTreeMap::new(),
            &flat_frames(30),
            &Fixed(vec![0.0]),
            DEFAULT_WPM,
        )
        .unwrap();
        let kinds: Vec<_> = t.entries.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [EntryKind::Narration, EntryKind::Quote, EntryKind::Narration]
        );
        assert_eq!(t.entries[1].clip_id.as_deref(), Some("c1"));
        assert_eq!(t.entries[1].duration_s, 4.5);
        assert_eq!(
            t.total_duration_s,
            t.entries.iter().map(|e| e.duration_s).sum::<f64>()
        );
    }

    #[test]
    fn repeated_quote_falls_to_second_rank() {
        let s = script(vec![resolved("c0"), resolved("c0")]);
        let rankings = BTreeMap::from([
            (0, ranking(&["c0", "c2", "c1"])),
            (1, ranking(&["c0", "c2", "c1"])),
        ]);
        let t = assemble(
            &s,
            &pool(3),
            &rankings,
            &flat_frames(5),
            &Fixed(vec![0.0]),
            DEFAULT_WPM,
        )
        .unwrap();
        assert_eq!(t.entries[1].clip_id.as_deref(), Some("c2"));
        let no_rank = assemble(
            &s,
            &pool(3),
            &BTreeMap::new(),
            &flat_frames(5),
            &Fixed(vec![0.0]),
            DEFAULT_WPM,
        );
        assert!(matches!(no_rank, Err(Error::DedupExhausted(1))));
    }

    #[test]
    fn repeated_narration_moves_to_next_window() {
        let n = ScriptElement::narration("same words");
        let s = script(vec![n.clone(), resolved("c0"), n]);
        let t = assemble(
            &s,
            &pool(1),
            &BTreeMap::new(),
            &flat_frames(8),
            &Fixed(vec![0.0]),
            DEFAULT_WPM,
        )
        .unwrap();
        assert_eq!(t.entries[0].frames(), 0..1);
        assert_eq!(t.entries[2].frames(), 1..2);
    }

    #[test]
    fn narration_rate() {
        let words = vec!["w"; 150].join(" ");
        assert_eq!(narration_duration_s(&words, 150.0), 60.0);
        let s = script(vec![ScriptElement::narration(words)]);
        let t = assemble(
            &s,
            &pool(1),
            &BTreeMap::new(),
            &flat_frames(100),
            &Fixed(vec![0.0]),
            150.0,
        )
        .unwrap();
        assert_eq!(t.entries[0].duration_s, 60.0);
        assert_eq!(t.entries[0].frames(), 0..60);
        assert_eq!(visual_window_s(2.0), 2);
        assert_eq!(visual_window_s(2.2), 3);
        assert_eq!(visual_window_s(0.1), 1);
    }

    #[test]
    fn placeholders_are_rejected() {
        let s = script(vec![
            ScriptElement::narration("a"),
            ScriptElement::QuotePlaceholder,
        ]);
        let r = assemble(
            &s,
            &pool(1),
            &BTreeMap::new(),
            &flat_frames(4),
            &Fixed(vec![0.0]),
            DEFAULT_WPM,
        );
        assert!(matches!(r, Err(Error::UnresolvedPlaceholder(1))));
    }

    #[test]
    fn quote_frames_cover_the_clip() {
        let p = pool(2);
        let e = TimelineEntry::quote(p.get("c1").unwrap());
        assert_eq!(e.frames(), 10..15);
    }

    #[test]
    fn edl_roundtrip() {
        let s = script(vec![
            ScriptElement::narration("a narration, with \"quotes\""),
            resolved("c1"),
            ScriptElement::narration("more"),
        ]);
        let scorer = CosineScorer(HashingEmbedder::new(2, 1));
        let t = assemble(
            &s,
            &pool(3),
            &BTreeMap::new(),
            &flat_frames(9),
            &scorer,
            137.0,
        )
        .unwrap();
        let text = format_edl(&t).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_edl(&text, "doc", "e").unwrap(), t);
        let empty = TeaserTimeline::new("doc", vec![]);
        assert_eq!(
            format_edl(&empty).unwrap(),
            "kind,source_doc,clip_or_start,end,duration_s,text\n"
        );
        assert!(parse_edl("kind,x\n", "doc", "e").is_err());
    }

    #[test]
    fn frame_pool_file() {
        let mut f = VectorFile::new(1);
        for (id, v) in [("a@1", 1.0), ("a@0", 0.0), ("b@0", 5.0)] {
            f.push(id, vec![v]).unwrap();
        }
        let pools = frame_pools_from_vectors(&f).unwrap();
        assert_eq!(pools["a"].frames, vec![vec![0.0], vec![1.0]]);
        f.push("b@2", vec![1.0]).unwrap();
        assert!(
            matches!(frame_pools_from_vectors(&f), Err(Error::MissingFrame(id)) if id == "b@1")
        );
    }
}
