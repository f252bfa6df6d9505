//! Browser bindings for the demo page in `www/`. Each export returns a JSON
//! string; the `*_json` functions behind them are plain Rust so they can be
//! tested natively.

use quotereel::embedding::{train, RetrievalModel, RetrievalVariant, TrainConfig};
use quotereel::metrics::{rouge, RougeVariant};
use quotereel::rng::stage_rng;
use quotereel::script::{
    count_quotes, detect_encoding, parse, serialize_as, Encoding, ScriptElement,
};
use quotereel::synthetic::{generate, SyntheticConfig};
use quotereel::Error;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn element_json(e: &ScriptElement) -> Value {
    match e {
        ScriptElement::Narration(t) => json!({ "kind": "narration", "text": t }),
        ScriptElement::QuotePlaceholder => json!({ "kind": "placeholder" }),
        ScriptElement::DirectQuote { text, .. } => json!({ "kind": "quote", "text": text }),
    }
}

/// Parses a script in whichever encoding its markers indicate.
pub fn parse_script_json(text: &str) -> Value {
    let enc = detect_encoding(text);
    match parse(text, enc) {
        Ok(s) => {
            let other = match enc {
                Encoding::Dq => Encoding::Idq,
                Encoding::Idq => Encoding::Dq,
            };
            json!({
                "ok": true,
                "encoding": enc.name(),
                "quotes": count_quotes(&s),
                "elements": s.elements.iter().map(element_json).collect::<Vec<_>>(),
                "converted": serialize_as(&s, other).ok(),
            })
        }
        Err(e) => {
            let offset = match &e {
                Error::Marker { offset, .. } => Some(*offset),
                _ => None,
            };
            json!({ "ok": false, "encoding": enc.name(), "error": e.to_string(), "offset": offset })
        }
    }
}

pub fn rouge_json(candidate: &str, reference: &str) -> Value {
    json!({
        "rouge1": rouge(candidate, reference, RougeVariant::One),
        "rouge2": rouge(candidate, reference, RougeVariant::Two),
        "rougeL": rouge(candidate, reference, RougeVariant::L),
    })
}

/// Trains the text+visual retriever on a generated corpus and reports the
/// loss history and held-out recall at 1, 5 and 10.
pub fn train_synthetic_json(
    n_docs: usize,
    clips_per_doc: usize,
    noise: f64,
    max_epochs: usize,
    seed: u64,
) -> Value {
    let run = || -> quotereel::Result<Value> {
        if n_docs < 2 || clips_per_doc < 2 || max_epochs == 0 || !(0.0..=2.0).contains(&noise) {
            return Err(Error::Config(
                "need ≥ 2 documentaries, ≥ 2 clips each, ≥ 1 epoch and noise in [0, 2]".into(),
            ));
        }
        let cfg = SyntheticConfig {
            n_docs,
            clips_per_doc,
            query_noise: noise,
            seed,
            ..SyntheticConfig::default()
        };
        let corpus = generate(&cfg);
        let model = RetrievalModel::init(
            RetrievalVariant::Tv,
            cfg.text_dim,
            cfg.text_dim,
            cfg.frame_dim,
            None,
            &mut stage_rng(seed, "init"),
        );
        let before = corpus.held_out_recall(&model, &[1, 5, 10], seed)?;
        let tc = TrainConfig {
            learning_rate: 0.5,
            max_epochs,
            patience: 10,
            batch_size: 64.min(n_docs * clips_per_doc),
            seed,
            ..TrainConfig::default()
        };
        let out = train(
            model,
            &corpus.samples,
            &corpus.clips,
            &corpus.embedder(),
            &tc,
        )?;
        let after = corpus.held_out_recall(&out.model, &[1, 5, 10], seed)?;
        Ok(json!({
            "ok": true,
            "chance_at_1": 1.0 / clips_per_doc as f64,
            "history": out.history,
            "recall_before": before,
            "recall_after": after,
        }))
    };
    run().unwrap_or_else(|e| json!({ "ok": false, "error": e.to_string() }))
}

#[wasm_bindgen]
pub fn parse_script(text: &str) -> String {
    parse_script_json(text).to_string()
}

#[wasm_bindgen]
pub fn rouge_scores(candidate: &str, reference: &str) -> String {
    rouge_json(candidate, reference).to_string()
}

#[wasm_bindgen]
pub fn train_synthetic(
    n_docs: u32,
    clips_per_doc: u32,
    noise: f64,
    max_epochs: u32,
    seed: u32,
) -> String {
    train_synthetic_json(
        n_docs as usize,
        clips_per_doc as usize,
        noise,
        max_epochs as usize,
        u64::from(seed),
    )
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_converts() {
        let v = parse_script_json("Cold open. <QUOTE> It ended there.");
        assert_eq!(v["ok"], true);
        assert_eq!(v["encoding"], "IDQ");
        assert_eq!(v["quotes"], 1);
        assert_eq!(v["elements"][1]["kind"], "placeholder");
        // a placeholder has no direct-quote form
        assert!(v["converted"].is_null());
        let dq = parse_script_json("A <SOQ> we stayed <EOQ> B");
        assert_eq!(dq["converted"], "A <QUOTE> B");
    }

    #[test]
    fn reports_marker_offset() {
        let v = parse_script_json("a <SOQ> b");
        assert_eq!(v["ok"], false);
        assert_eq!(v["offset"], 2);
    }

    #[test]
    fn rouge_values() {
        let v = rouge_json("the cat sat", "the cat");
        assert_eq!(v["rouge1"].as_f64().unwrap(), 0.8);
        assert_eq!(rouge_json("a b", "a b")["rougeL"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn small_training_run_beats_chance() {
        let v = train_synthetic_json(4, 10, 0.1, 20, 3);
        assert_eq!(v["ok"], true, "{v}");
        let r1 = v["recall_after"][0][1].as_f64().unwrap();
        assert!(r1 > v["chance_at_1"].as_f64().unwrap() * 2.0, "{v}");
        assert!(!v["history"].as_array().unwrap().is_empty());
        assert_eq!(train_synthetic_json(1, 10, 0.1, 5, 0)["ok"], false);
    }
}
