//! Objective metrics over scripts and assembled timelines.
//!
//! Word-level metrics tokenize with [`metric_tokens`]: lowercase, split on
//! whitespace, punctuation trimmed from token ends.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::assembler::{EntryKind, FramePool, FrameRef, TeaserTimeline};
use crate::embedding::query::TextEmbedder;
use crate::embedding::vector::{cosine_similarity, norm};
use crate::error::{Error, Result};
use crate::script::{count_quotes, Script, ScriptElement};
use crate::text::metric_tokens;

pub const DEFAULT_SCR_THRESHOLD: f64 = 0.9;
pub const DEFAULT_FRAME_CANDIDATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RougeVariant {
    One,
    Two,
    L,
}

fn counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// `(matches, candidate units, reference units)` for a ROUGE variant.
pub fn rouge_counts<T: Eq + Hash + Clone>(
    candidate: &[T],
    reference: &[T],
    variant: RougeVariant,
) -> (usize, usize, usize) {
    match variant {
        RougeVariant::L => (
            lcs_len(candidate, reference),
            candidate.len(),
            reference.len(),
        ),
        RougeVariant::One | RougeVariant::Two => {
            let n = if variant == RougeVariant::One { 1 } else { 2 };
            let grams = |t: &[T]| t.len().saturating_sub(n - 1);
            let rc = counts(reference, n);
            let overlap = counts(candidate, n)
                .into_iter()
                .map(|(g, c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
            (overlap, grams(candidate), grams(reference))
        }
    }
}

/// F1 from match counts: `2PR / (P + R)`, which reduces to
/// `2m / (c + r)`. Zero when nothing matches.
pub fn f1_from_counts(matches: usize, cand: usize, reference: usize) -> f64 {
    if matches == 0 || cand == 0 || reference == 0 {
        return 0.0;
    }
    2.0 * matches as f64 / (cand + reference) as f64
}

pub fn rouge_tokens<T: Eq + Hash + Clone>(
    candidate: &[T],
    reference: &[T],
    variant: RougeVariant,
) -> f64 {
    let (m, c, r) = rouge_counts(candidate, reference, variant);
    f1_from_counts(m, c, r)
}

pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant) -> f64 {
    rouge_tokens(
        &metric_tokens(candidate),
        &metric_tokens(reference),
        variant,
    )
}

/// Mean quote count per script.
pub fn qdi(scripts: &[Script]) -> Result<f64> {
    if scripts.is_empty() {
        return Err(Error::EmptyInput("scripts".into()));
    }
    let total: usize = scripts.iter().map(count_quotes).sum();
    Ok(total as f64 / scripts.len() as f64)
}

/// Percentage of scripts with at least one quote.
pub fn qcr(scripts: &[Script]) -> Result<f64> {
    if scripts.is_empty() {
        return Err(Error::EmptyInput("scripts".into()));
    }
    let with = scripts.iter().filter(|s| count_quotes(s) > 0).count();
    Ok(100.0 * with as f64 / scripts.len() as f64)
}

/// Cosine that scores zero-norm inputs as 0.
fn soft_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if norm(a) == 0.0 || norm(b) == 0.0 {
        crate::embedding::vector::check_dims(a.len(), b.len())?;
        return Ok(0.0);
    }
    cosine_similarity(a, b)
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut bc: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *bc.entry(t).or_insert(0) += 1;
    }
    a.iter()
        .filter(|t| match bc.get_mut(t.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Share of matched-interview words that quoted spans reuse. Each span is
/// matched to the interview with the nearest text embedding (first on ties);
/// the denominator adds up the matched interview's words once per span.
pub fn overlap_ratio(
    spans: &[&str],
    interview_base: &[&str],
    embedder: &dyn TextEmbedder,
) -> Result<f64> {
    if spans.is_empty() {
        return Ok(0.0);
    }
    if interview_base.is_empty() {
        return Err(Error::EmptyInput("interview base".into()));
    }
    let base: Vec<Vec<f64>> = interview_base.iter().map(|t| embedder.embed(t)).collect();
    let (mut num, mut den) = (0usize, 0usize);
    for span in spans {
        let q = embedder.embed(span);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, e) in base.iter().enumerate() {
            let s = soft_cosine(&q, e)?;
            if s > best.0 {
                best = (s, i);
            }
        }
        let matched = metric_tokens(interview_base[best.1]);
        num += multiset_overlap(&metric_tokens(span), &matched);
        den += matched.len();
    }
    Ok(if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    })
}

fn frame_vec<'a>(frames: &'a BTreeMap<String, FramePool>, f: &FrameRef) -> Result<&'a [f64]> {
    frames
        .get(&f.doc)
        .and_then(|p| p.get(f.second))
        .ok_or_else(|| Error::MissingFrame(crate::assembler::frame_id(&f.doc, f.second)))
}

/// Percentage of consecutive frame pairs that change scene. Crossing into a
/// new entry always counts; inside a narration entry a pair counts when its
/// cosine falls below `threshold`; a quote clip is one scene throughout.
pub fn scene_change_rate(
    timeline: &TeaserTimeline,
    frames: &BTreeMap<String, FramePool>,
    threshold: f64,
) -> Result<f64> {
    let all = timeline.frames();
    if all.len() < 2 {
        return Err(Error::EmptyInput(
            "timeline with at least two frames".into(),
        ));
    }
    let mut changes = 0usize;
    for pair in all.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let change = if a.entry != b.entry {
            true
        } else if timeline.entries[a.entry].kind == EntryKind::Quote {
            false
        } else {
            soft_cosine(frame_vec(frames, a)?, frame_vec(frames, b)?)? < threshold
        };
        changes += usize::from(change);
    }
    Ok(100.0 * changes as f64 / (all.len() - 1) as f64)
}

/// Percentage of frames whose (documentary, second) already appeared.
pub fn repetitiveness(timeline: &TeaserTimeline) -> Result<f64> {
    let all = timeline.frames();
    if all.is_empty() {
        return Err(Error::EmptyInput("timeline".into()));
    }
    let mut seen = HashSet::new();
    let repeats = all
        .iter()
        .filter(|f| !seen.insert((f.doc.as_str(), f.second)))
        .count();
    Ok(100.0 * repeats as f64 / all.len() as f64)
}

/// Percentage of frames belonging to entries that repeat one of the
/// previous `window` selections outright.
pub fn window_repetitiveness(timeline: &TeaserTimeline, window: usize) -> Result<f64> {
    let all = timeline.frames();
    if all.is_empty() {
        return Err(Error::EmptyInput("timeline".into()));
    }
    let sel: Vec<_> = timeline.entries.iter().map(|e| e.selection()).collect();
    let repeated: usize = (0..sel.len())
        .filter(|&i| sel[i.saturating_sub(window)..i].contains(&sel[i]))
        .map(|i| timeline.entries[i].frames().len())
        .sum();
    Ok(100.0 * repeated as f64 / all.len() as f64)
}

/// Percentage of teaser time spent in quote clips.
pub fn interview_ratio(timeline: &TeaserTimeline) -> Result<f64> {
    if timeline.entries.is_empty() || timeline.total_duration_s <= 0.0 {
        return Err(Error::EmptyInput("timeline".into()));
    }
    let quotes: f64 = timeline
        .entries
        .iter()
        .filter(|e| e.kind == EntryKind::Quote)
        .map(|e| e.duration_s)
        .sum();
    Ok(100.0 * quotes / timeline.total_duration_s)
}

/// Highest cosine between a text embedding and any frame of an interval.
pub fn alignment_score(text_embedding: &[f64], interval_frames: &[&[f64]]) -> Result<f64> {
    if interval_frames.is_empty() {
        return Err(Error::EmptyInput("interval frames".into()));
    }
    interval_frames
        .iter()
        .map(|f| soft_cosine(text_embedding, f))
        .try_fold(f64::NEG_INFINITY, |m, s| s.map(|s| m.max(s)))
}

/// Mean alignment over quote entries and over narration entries; `None` for
/// a kind the timeline does not contain.
pub fn alignment_by_kind(
    timeline: &TeaserTimeline,
    frames: &BTreeMap<String, FramePool>,
    embedder: &dyn TextEmbedder,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut sums: HashMap<EntryKind, (f64, usize)> = HashMap::new();
    let all = timeline.frames();
    for (i, e) in timeline.entries.iter().enumerate() {
        let fs = all
            .iter()
            .filter(|f| f.entry == i)
            .map(|f| frame_vec(frames, f))
            .collect::<Result<Vec<_>>>()?;
        let s = alignment_score(&embedder.embed(&e.text), &fs)?;
        let acc = sums.entry(e.kind).or_insert((0.0, 0));
        acc.0 += s;
        acc.1 += 1;
    }
    let mean = |k| sums.get(&k).map(|(s, n)| s / *n as f64);
    Ok((mean(EntryKind::Quote), mean(EntryKind::Narration)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMatch {
    /// Same documentary and second.
    #[default]
    Identity,
    /// Among the nearest frames by embedding, then same documentary and second.
    Embedding,
}

/// Share of `from` frames that find a counterpart in `to`.
fn matched_share(
    from: &[FrameRef],
    to: &[FrameRef],
    mode: FrameMatch,
    frames: &BTreeMap<String, FramePool>,
) -> Result<f64> {
    let key = |f: &FrameRef| (f.doc.clone(), f.second);
    let to_keys: Vec<(String, usize)> = {
        let mut seen = HashSet::new();
        to.iter()
            .map(key)
            .filter(|k| seen.insert(k.clone()))
            .collect()
    };
    let hits = match mode {
        FrameMatch::Identity => {
            let set: HashSet<_> = to_keys.iter().collect();
            from.iter().filter(|f| set.contains(&key(f))).count()
        }
        FrameMatch::Embedding => {
            let to_vecs = to_keys
                .iter()
                .map(|(d, s)| {
                    frame_vec(
                        frames,
                        &FrameRef {
                            entry: 0,
                            doc: d.clone(),
                            second: *s,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mut hits = 0;
            for f in from {
                let v = frame_vec(frames, f)?;
                let mut scored = to_vecs
                    .iter()
                    .enumerate()
                    .map(|(i, t)| soft_cosine(v, t).map(|s| (s, i)))
                    .collect::<Result<Vec<_>>>()?;
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let k = key(f);
                if scored
                    .iter()
                    .take(DEFAULT_FRAME_CANDIDATES)
                    .any(|&(_, i)| to_keys[i] == k)
                {
                    hits += 1;
                }
            }
            hits
        }
    };
    Ok(hits as f64 / from.len() as f64)
}

/// Frame-level F1 (as a percentage) of a generated timeline against a
/// reference one.
pub fn frame_f1(
    generated: &TeaserTimeline,
    ground_truth: &TeaserTimeline,
    mode: FrameMatch,
    frames: &BTreeMap<String, FramePool>,
) -> Result<f64> {
    let (g, t) = (generated.frames(), ground_truth.frames());
    if t.is_empty() {
        return Err(Error::EmptyInput("ground-truth timeline".into()));
    }
    if g.is_empty() {
        return Ok(0.0);
    }
    let p = matched_share(&g, &t, mode, frames)?;
    let r = matched_share(&t, &g, mode, frames)?;
    Ok(if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    })
}

/// Narration and quote words of a script in order, markers dropped.
pub fn script_text(script: &Script) -> String {
    script
        .elements
        .iter()
        .filter_map(|e| match e {
            ScriptElement::Narration(t) => Some(t.as_str()),
            ScriptElement::DirectQuote { text, .. } => Some(text.as_str()),
            ScriptElement::QuotePlaceholder => None,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn quote_spans(script: &Script) -> Vec<&str> {
    script
        .elements
        .iter()
        .filter_map(|e| match e {
            ScriptElement::DirectQuote { text, .. } => Some(text.as_str()),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub qdi: f64,
    pub qcr_pct: f64,
    pub overlap_ratio: f64,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    #[serde(rename = "rougeL_f1")]
    pub rouge_l_f1: f64,
    pub scr_pct: f64,
    pub rep_pct: f64,
    pub interview_ratio_pct: f64,
    pub clips_i: Option<f64>,
    pub clips_n: Option<f64>,
    pub frame_f1_pct: Option<f64>,
    pub duration_s: f64,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "qdi",
    "qcr_pct",
    "overlap_ratio",
    "rouge1_f1",
    "rouge2_f1",
    "rougeL_f1",
    "scr_pct",
    "rep_pct",
    "interview_ratio_pct",
    "clips_i",
    "clips_n",
    "frame_f1_pct",
    "duration_s",
];

impl MetricReport {
    fn values(&self) -> [Option<f64>; 13] {
        [
            Some(self.qdi),
            Some(self.qcr_pct),
            Some(self.overlap_ratio),
            Some(self.rouge1_f1),
            Some(self.rouge2_f1),
            Some(self.rouge_l_f1),
            Some(self.scr_pct),
            Some(self.rep_pct),
            Some(self.interview_ratio_pct),
            self.clips_i,
            self.clips_n,
            self.frame_f1_pct,
            Some(self.duration_s),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub scr_threshold: f64,
    pub frame_match: FrameMatch,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            scr_threshold: DEFAULT_SCR_THRESHOLD,
            frame_match: FrameMatch::Identity,
        }
    }
}

/// Everything one document is scored on.
#[derive(Debug, Clone, Copy)]
pub struct DocumentInputs<'a> {
    pub script: &'a Script,
    pub reference_script: &'a Script,
    pub timeline: &'a TeaserTimeline,
    pub reference_timeline: Option<&'a TeaserTimeline>,
    pub interview_base: &'a [&'a str],
    pub frames: &'a BTreeMap<String, FramePool>,
}

pub fn evaluate_document(
    inputs: DocumentInputs<'_>,
    settings: &MetricSettings,
    embedder: &dyn TextEmbedder,
) -> Result<MetricReport> {
    let one = std::slice::from_ref(inputs.script);
    let (cand, reference) = (
        script_text(inputs.script),
        script_text(inputs.reference_script),
    );
    let (clips_i, clips_n) = alignment_by_kind(inputs.timeline, inputs.frames, embedder)?;
    Ok(MetricReport {
        qdi: qdi(one)?,
        qcr_pct: qcr(one)?,
        overlap_ratio: overlap_ratio(&quote_spans(inputs.script), inputs.interview_base, embedder)?,
        rouge1_f1: rouge(&cand, &reference, RougeVariant::One),
        rouge2_f1: rouge(&cand, &reference, RougeVariant::Two),
        rouge_l_f1: rouge(&cand, &reference, RougeVariant::L),
        scr_pct: scene_change_rate(inputs.timeline, inputs.frames, settings.scr_threshold)?,
        rep_pct: repetitiveness(inputs.timeline)?,
        interview_ratio_pct: interview_ratio(inputs.timeline)?,
        clips_i,
        clips_n,
        frame_f1_pct: inputs
            .reference_timeline
            .map(|gt| frame_f1(inputs.timeline, gt, settings.frame_match, inputs.frames))
            .transpose()?,
        duration_s: inputs.timeline.total_duration_s,
    })
}

/// Unweighted mean over documents; an optional field averages the documents
/// that have it.
pub fn mean_report(rows: &[(String, MetricReport)]) -> Option<MetricReport> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| rows.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let mean_opt = |f: fn(&MetricReport) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(|(_, r)| f(r)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Some(MetricReport {
        qdi: mean(|r| r.qdi),
        qcr_pct: mean(|r| r.qcr_pct),
        overlap_ratio: mean(|r| r.overlap_ratio),
        rouge1_f1: mean(|r| r.rouge1_f1),
        rouge2_f1: mean(|r| r.rouge2_f1),
        rouge_l_f1: mean(|r| r.rouge_l_f1),
        scr_pct: mean(|r| r.scr_pct),
        rep_pct: mean(|r| r.rep_pct),
        interview_ratio_pct: mean(|r| r.interview_ratio_pct),
        clips_i: mean_opt(|r| r.clips_i),
        clips_n: mean_opt(|r| r.clips_n),
        frame_f1_pct: mean_opt(|r| r.frame_f1_pct),
        duration_s: mean(|r| r.duration_s),
    })
}

/// One row per document in the given order, then a `MEAN` row. Absent
/// values are left empty.
pub fn format_report_csv(rows: &[(String, MetricReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("writing report: {e}"));
    let mut header = vec!["doc_id"];
    header.extend(REPORT_COLUMNS);
    w.write_record(&header).map_err(err)?;
    let mean = mean_report(rows);
    for (doc, r) in rows
        .iter()
        .map(|(d, r)| (d.as_str(), r))
        .chain(mean.as_ref().map(|m| ("MEAN", m)))
    {
        let mut rec = vec![doc.to_string()];
        rec.extend(
            r.values()
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::TimelineEntry;
    use crate::embedding::HashingEmbedder;
    use crate::script::{parse_dq, parse_idq};

    fn narr(doc: &str, start: usize, end: usize) -> TimelineEntry {
        TimelineEntry {
            kind: EntryKind::Narration,
            source_doc: doc.into(),
            clip_id: None,
            start_s: start as f64,
            end_s: end as f64,
            duration_s: (end - start) as f64,
            text: "narration".into(),
        }
    }

    fn quote(doc: &str, id: &str, start: f64, end: f64) -> TimelineEntry {
        TimelineEntry {
            kind: EntryKind::Quote,
            source_doc: doc.into(),
            clip_id: Some(id.into()),
            start_s: start,
            end_s: end,
            duration_s: end - start,
            text: "quote".into(),
        }
    }

    fn tl(entries: Vec<TimelineEntry>) -> TeaserTimeline {
        TeaserTimeline::new("d", entries)
    }

    fn pools(doc: &str, frames: Vec<Vec<f64>>) -> BTreeMap<String, FramePool> {
        BTreeMap::from([(doc.to_string(), FramePool::new(doc, frames).unwrap())])
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge("the cat sat", "the cat", RougeVariant::One), 0.8);
        for v in [RougeVariant::One, RougeVariant::Two, RougeVariant::L] {
            assert_eq!(rouge("A quick test, here.", "a quick TEST here", v), 1.0);
            assert_eq!(rouge("alpha beta", "gamma delta", v), 0.0);
            assert_eq!(rouge("", "", v), 0.0);
        }
        assert_eq!(
            rouge("the cat sat", "the cat", RougeVariant::Two),
            2.0 / 3.0
        );
        assert_eq!(lcs_len(b"abcbdab", b"bdcaba"), 4);
    }

    #[test]
    fn qdi_qcr_examples() {
        let s = |n: usize| {
            let mut t = String::from("intro");
            for _ in 0..n {
                t.push_str(" <QUOTE> more");
            }
            parse_idq(&t).unwrap()
        };
        assert_eq!(qdi(&[s(2), s(4), s(3)]).unwrap(), 3.0);
        assert_eq!(qdi(&[s(0), s(0)]).unwrap(), 0.0);
        assert_eq!(qcr(&[s(1), s(0), s(2), s(0)]).unwrap(), 50.0);
        assert_eq!(qcr(&[s(1), s(1)]).unwrap(), 100.0);
        assert!(qdi(&[]).is_err() && qcr(&[]).is_err());
    }

    #[test]
    fn overlap_examples() {
        let e = HashingEmbedder::new(64, 0);
        let base = ["the cat sat down", "an unrelated sentence about rivers"];
        assert_eq!(overlap_ratio(&["the cat sat"], &base, &e).unwrap(), 0.75);
        assert_eq!(overlap_ratio(&[], &base, &e).unwrap(), 0.0);
        assert!(overlap_ratio(&["x"], &[], &e).is_err());
    }

    #[test]
    fn scr_examples() {
        let same = pools("d", vec![vec![1.0, 0.0]; 10]);
        assert_eq!(
            scene_change_rate(&tl(vec![narr("d", 0, 10)]), &same, 0.9).unwrap(),
            0.0
        );
        let alt = pools(
            "d",
            (0..10)
                .map(|i| {
                    if i % 2 == 0 {
                        vec![1.0, 0.0]
                    } else {
                        vec![0.0, 1.0]
                    }
                })
                .collect(),
        );
        assert_eq!(
            scene_change_rate(&tl(vec![narr("d", 0, 10)]), &alt, 0.9).unwrap(),
            100.0
        );
        // quote interior is one scene, the boundary counts
        let t = tl(vec![narr("d", 0, 2), quote("d", "c", 2.0, 6.0)]);
        assert_eq!(scene_change_rate(&t, &alt, 0.9).unwrap(), 200.0 / 5.0);
        assert!(scene_change_rate(&tl(vec![narr("d", 0, 1)]), &same, 0.9).is_err());
    }

    #[test]
    fn rep_examples() {
        assert_eq!(
            repetitiveness(&tl(vec![narr("d", 0, 5), narr("d", 5, 9)])).unwrap(),
            0.0
        );
        assert_eq!(
            repetitiveness(&tl(vec![narr("d", 0, 10), narr("d", 0, 10)])).unwrap(),
            50.0
        );
        assert_eq!(
            window_repetitiveness(&tl(vec![narr("d", 0, 10), narr("d", 0, 10)]), 3).unwrap(),
            50.0
        );
        let spaced = tl(vec![
            narr("d", 0, 1),
            narr("d", 1, 2),
            narr("d", 2, 3),
            narr("d", 3, 4),
            narr("d", 0, 1),
        ]);
        assert_eq!(window_repetitiveness(&spaced, 3).unwrap(), 0.0);
        assert!(repetitiveness(&tl(vec![])).is_err());
    }

    #[test]
    fn interview_ratio_examples() {
        assert_eq!(interview_ratio(&tl(vec![narr("d", 0, 5)])).unwrap(), 0.0);
        assert_eq!(
            interview_ratio(&tl(vec![narr("d", 0, 30), quote("d", "c", 40.0, 70.0)])).unwrap(),
            50.0
        );
        assert!(interview_ratio(&tl(vec![])).is_err());
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(
            alignment_score(&[1.0, 0.0], &[&[0.0, 1.0], &[2.0, 0.0]]).unwrap(),
            1.0
        );
        assert_eq!(
            alignment_score(&[1.0, 0.0], &[&[0.0, 1.0], &[0.0, -3.0]]).unwrap(),
            0.0
        );
        assert!(alignment_score(&[1.0], &[]).is_err());
    }

    #[test]
    fn frame_f1_examples() {
        let a = tl(vec![narr("d", 0, 10)]);
        let b = tl(vec![narr("d", 5, 15)]);
        let c = tl(vec![narr("d", 20, 30)]);
        let fr = pools("d", (0..30).map(|i| vec![1.0, i as f64]).collect());
        for mode in [FrameMatch::Identity, FrameMatch::Embedding] {
            assert_eq!(frame_f1(&a, &a, mode, &fr).unwrap(), 100.0);
            assert_eq!(frame_f1(&a, &c, mode, &fr).unwrap(), 0.0);
            assert_eq!(frame_f1(&a, &b, mode, &fr).unwrap(), 50.0);
        }
        assert!(frame_f1(&a, &tl(vec![]), FrameMatch::Identity, &fr).is_err());
    }

    #[test]
    fn report_csv_has_mean_row() {
        let r1 = MetricReport {
            qdi: 2.0,
            clips_i: Some(0.5),
            ..Default::default()
        };
        let r2 = MetricReport {
            qdi: 4.0,
            ..Default::default()
        };
        let csv = format_report_csv(&[("a".into(), r1), ("b".into(), r2)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "doc_id,qdi,qcr_pct,overlap_ratio,rouge1_f1,rouge2_f1,rougeL_f1,scr_pct,rep_pct,interview_ratio_pct,clips_i,clips_n,frame_f1_pct,duration_s"
        );
        assert_eq!(lines[3], "MEAN,3,0,0,0,0,0,0,0,0,0.5,,,0");
    }

    #[test]
    fn script_text_drops_markers() {
        let s = parse_dq("Intro. <SOQ>we stayed<EOQ> Outro.").unwrap();
        assert_eq!(script_text(&s), "Intro. we stayed Outro.");
        assert_eq!(quote_spans(&s), ["we stayed"]);
    }
}
