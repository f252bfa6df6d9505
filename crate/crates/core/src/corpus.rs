//! Diarized transcript ingestion and training-sample construction.
//!
//! A documentary arrives as a speaker-labelled transcript. The speaker with
//! the most transcribed material is taken to be the narrator; every other
//! segment is a quotable clip. Training samples pair each quotable clip with
//! the narration immediately around it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::word_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSegment {
    pub speaker_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl SpeakerSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentaryRecord {
    pub doc_id: String,
    pub segments: Vec<SpeakerSegment>,
    pub duration_s: f64,
}

impl DocumentaryRecord {
    /// Builds a record, sorting segments by start time. Duration is the
    /// latest segment end.
    pub fn new(doc_id: impl Into<String>, mut segments: Vec<SpeakerSegment>) -> Self {
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let duration_s = segments.iter().map(|s| s.end_s).fold(0.0, f64::max);
        Self {
            doc_id: doc_id.into(),
            segments,
            duration_s,
        }
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .segments
            .iter()
            .map(|s| s.speaker_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// A quotable (non-narrator) segment of a documentary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub doc_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub transcript: String,
    pub text_embedding: Option<Vec<f64>>,
    pub frame_embeddings: Option<[Vec<f64>; 3]>,
}

impl ClipRecord {
    pub fn new(
        clip_id: impl Into<String>,
        doc_id: impl Into<String>,
        start_s: f64,
        end_s: f64,
        transcript: impl Into<String>,
    ) -> Self {
        Self {
            clip_id: clip_id.into(),
            doc_id: doc_id.into(),
            start_s,
            end_s,
            transcript: transcript.into(),
            text_embedding: None,
            frame_embeddings: None,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub doc_id: String,
    pub prev_narration: String,
    pub next_narration: String,
    pub positive_clip_id: String,
}

/// How the narrator is picked out of the speakers of a documentary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NarratorRule {
    /// Most whitespace-delimited words across all of a speaker's segments.
    #[default]
    WordCount,
    /// Longest total segment duration.
    Duration,
}

pub fn clip_id_for(doc_id: &str, segment_index: usize) -> String {
    format!("{doc_id}_s{segment_index:04}")
}

/// Seconds with at least two fractional digits, and otherwise the shortest
/// representation that parses back to the same value.
pub fn format_seconds(value: f64) -> String {
    let mut s = format!("{value}");
    match s.find('.') {
        None => s.push_str(".00"),
        Some(dot) => {
            let frac = s.len() - dot - 1;
            if frac < 2 {
                s.push('0');
            }
        }
    }
    s
}

fn parse_seconds(field: &str, file: &str, line: usize, name: &str) -> Result<f64> {
    let frac_digits = field.split_once('.').map(|(_, f)| f.len()).unwrap_or(0);
    if frac_digits < 2 {
        return Err(Error::parse(
            file,
            line,
            format!("{name} `{field}` needs at least two fractional digits"),
        ));
    }
    let value: f64 = field.parse().map_err(|_| {
        Error::parse(
            file,
            line,
            format!("{name} `{field}` is not a decimal number"),
        )
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::parse(
            file,
            line,
            format!("{name} `{field}` must be finite and non-negative"),
        ));
    }
    Ok(value)
}

/// Parses transcript text. `origin` names the source in error messages.
pub fn parse_transcript(input: &str, origin: &str) -> Result<DocumentaryRecord> {
    let mut lines = input.lines().enumerate();
    let doc_id = match lines.next() {
        None => return Err(Error::EmptyTranscript(format!(" ({origin})"))),
        Some((_, header)) => header
            .strip_prefix("#doc_id=")
            .map(str::trim)
            .filter(|id| !id.is_empty())
            .ok_or_else(|| Error::parse(origin, 1, "expected `#doc_id=<id>` header"))?
            .to_string(),
    };

    let mut segments = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let speaker_id = fields[0].trim();
        if speaker_id.is_empty() {
            return Err(Error::parse(origin, line_no, "empty speaker id"));
        }
        let start_s = parse_seconds(fields[1], origin, line_no, "start")?;
        let end_s = parse_seconds(fields[2], origin, line_no, "end")?;
        if start_s >= end_s {
            return Err(Error::parse(
                origin,
                line_no,
                format!("start {start_s} is not before end {end_s}"),
            ));
        }
        let text = fields[3].trim();
        if text.is_empty() {
            return Err(Error::parse(origin, line_no, "empty utterance text"));
        }
        segments.push(SpeakerSegment {
            speaker_id: speaker_id.to_string(),
            start_s,
            end_s,
            text: text.to_string(),
        });
    }
    if segments.is_empty() {
        return Err(Error::EmptyTranscript(format!(" ({origin})")));
    }
    Ok(DocumentaryRecord::new(doc_id, segments))
}

pub fn load_transcript(path: &Path) -> Result<DocumentaryRecord> {
    let input = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transcript(&input, &path.display().to_string())
}

pub fn format_transcript(doc: &DocumentaryRecord) -> String {
    let mut out = format!("#doc_id={}\n", doc.doc_id);
    for seg in &doc.segments {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            seg.speaker_id,
            format_seconds(seg.start_s),
            format_seconds(seg.end_s),
            seg.text
        );
    }
    out
}

pub fn identify_narrator(doc: &DocumentaryRecord) -> Result<String> {
    identify_narrator_with(doc, NarratorRule::WordCount)
}

/// Ties go to the lexicographically smallest speaker id.
pub fn identify_narrator_with(doc: &DocumentaryRecord, rule: NarratorRule) -> Result<String> {
    if doc.segments.is_empty() {
        return Err(Error::EmptyDocumentary);
    }
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for seg in &doc.segments {
        let amount = match rule {
            NarratorRule::WordCount => word_count(&seg.text) as f64,
            NarratorRule::Duration => seg.duration_s(),
        };
        *totals.entry(seg.speaker_id.as_str()).or_default() += amount;
    }
    // BTreeMap iterates in ascending id order; only a strictly larger total displaces.
    let mut best: Option<(&str, f64)> = None;
    for (id, total) in totals {
        if best.is_none_or(|(_, b)| total > b) {
            best = Some((id, total));
        }
    }
    Ok(best.map(|(id, _)| id.to_string()).unwrap_or_default())
}

/// One clip per non-narrator segment, in segment order.
pub fn extract_quotable_clips(doc: &DocumentaryRecord, narrator: &str) -> Vec<ClipRecord> {
    doc.segments
        .iter()
        .enumerate()
        .filter(|(_, seg)| seg.speaker_id != narrator)
        .map(|(i, seg)| {
            ClipRecord::new(
                clip_id_for(&doc.doc_id, i),
                &doc.doc_id,
                seg.start_s,
                seg.end_s,
                &seg.text,
            )
        })
        .collect()
}

/// Contiguous ranges of sizes differing by at most one, larger first.
pub fn chunk_ranges(len: usize, n: usize) -> Result<Vec<Range<usize>>> {
    if n == 0 {
        return Err(Error::ZeroChunks);
    }
    let base = len / n;
    let extra = len % n;
    let mut start = 0;
    Ok((0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let range = start..start + size;
            start += size;
            range
        })
        .collect())
}

/// Splits a transcript into `n` chunks on segment boundaries. Each chunk is
/// its segments' text joined by single spaces; trailing chunks are empty when
/// there are fewer segments than chunks.
pub fn chunk_transcript(doc: &DocumentaryRecord, n: usize) -> Result<Vec<String>> {
    Ok(chunk_ranges(doc.segments.len(), n)?
        .into_iter()
        .map(|r| {
            doc.segments[r]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect())
}

/// One sample per non-narrator segment, pairing it with the nearest narrator
/// segment on either side. Clips with no narration on either side are dropped.
pub fn build_training_samples(doc: &DocumentaryRecord, narrator: &str) -> Vec<TrainingSample> {
    let segs = &doc.segments;
    let mut prev_narration: Vec<Option<&str>> = Vec::with_capacity(segs.len());
    let mut last = None;
    for seg in segs {
        prev_narration.push(last);
        if seg.speaker_id == narrator {
            last = Some(seg.text.as_str());
        }
    }
    let mut next_narration: Vec<Option<&str>> = vec![None; segs.len()];
    let mut upcoming = None;
    for (i, seg) in segs.iter().enumerate().rev() {
        next_narration[i] = upcoming;
        if seg.speaker_id == narrator {
            upcoming = Some(seg.text.as_str());
        }
    }

    segs.iter()
        .enumerate()
        .filter(|(_, seg)| seg.speaker_id != narrator)
        .filter_map(|(i, _)| {
            let prev = prev_narration[i].unwrap_or("");
            let next = next_narration[i].unwrap_or("");
            if prev.is_empty() && next.is_empty() {
                return None;
            }
            Some(TrainingSample {
                doc_id: doc.doc_id.clone(),
                prev_narration: prev.to_string(),
                next_narration: next.to_string(),
                positive_clip_id: clip_id_for(&doc.doc_id, i),
            })
        })
        .collect()
}

fn check_no_tab(field: &str, what: &str) -> Result<()> {
    if field.contains(['\t', '\n']) {
        return Err(Error::InvalidScript(format!(
            "{what} contains a tab or newline: {field:?}"
        )));
    }
    Ok(())
}

/// Clip metadata file: `clip_id<TAB>doc_id<TAB>start_s<TAB>end_s<TAB>transcript`.
pub fn format_clip_file(clips: &[ClipRecord]) -> Result<String> {
    let mut out = String::from("#clip_id\tdoc_id\tstart_s\tend_s\ttranscript\n");
    for c in clips {
        check_no_tab(&c.transcript, "transcript")?;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            c.clip_id,
            c.doc_id,
            format_seconds(c.start_s),
            format_seconds(c.end_s),
            c.transcript
        );
    }
    Ok(out)
}

pub fn parse_clip_file(input: &str, origin: &str) -> Result<Vec<ClipRecord>> {
    let mut clips = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                origin,
                line_no,
                "expected 5 tab-separated fields",
            ));
        }
        let start_s = parse_seconds(fields[2], origin, line_no, "start")?;
        let end_s = parse_seconds(fields[3], origin, line_no, "end")?;
        if start_s >= end_s {
            return Err(Error::parse(origin, line_no, "start is not before end"));
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::DuplicateId(fields[0].to_string()));
        }
        clips.push(ClipRecord::new(
            fields[0], fields[1], start_s, end_s, fields[4],
        ));
    }
    Ok(clips)
}

/// Sample file: `doc_id<TAB>positive_clip_id<TAB>prev<TAB>next`.
pub fn format_sample_file(samples: &[TrainingSample]) -> Result<String> {
    let mut out = String::from("#doc_id\tpositive_clip_id\tprev_narration\tnext_narration\n");
    for s in samples {
        check_no_tab(&s.prev_narration, "narration")?;
        check_no_tab(&s.next_narration, "narration")?;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.doc_id, s.positive_clip_id, s.prev_narration, s.next_narration
        );
    }
    Ok(out)
}

pub fn parse_sample_file(input: &str, origin: &str) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                origin,
                idx + 1,
                "expected 4 tab-separated fields",
            ));
        }
        samples.push(TrainingSample {
            doc_id: fields[0].to_string(),
            positive_clip_id: fields[1].to_string(),
            prev_narration: fields[2].to_string(),
            next_narration: fields[3].to_string(),
        });
    }
    Ok(samples)
}
