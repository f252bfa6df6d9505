//! Text vector files and trained-parameter bundles.
//!
//! A vector file starts with `#dim=<d> count=<n>` and then holds one
//! `id<TAB>v1 v2 … vd` line per vector. Values are written in the shortest
//! decimal form that parses back to the same `f64`, so files round-trip
//! exactly.
//!
//! A trained model is a directory of vector files using reserved ids:
//! `query.vec` (`query.row<i>`, `query.bias`), and for the text+visual
//! variant `fusion_layer1.vec` (`layer1.row<i>`, `bias1`) and
//! `fusion_layer2.vec` (`layer2.row<i>`, `bias2`), plus a `model.toml`
//! describing shapes and settings.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fusion::{FusionHead, ACTIVATION};
use super::model::{RetrievalModel, RetrievalVariant};
use super::query::{QueryEncoder, SumTokenPosition};
use super::train::OPTIMIZER;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub entries: Vec<(String, Vec<f64>)>,
}

impl VectorFile {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        self.entries.push((id.into(), values));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(i, _)| i == id)
            .map(|(_, v)| v.as_slice())
    }

    pub fn into_map(self) -> std::collections::HashMap<String, Vec<f64>> {
        self.entries.into_iter().collect()
    }
}

pub fn format_vector_file(file: &VectorFile) -> Result<String> {
    let mut out = format!("#dim={} count={}\n", file.dim, file.entries.len());
    for (id, values) in &file.entries {
        if id.is_empty() || id.contains(['\t', '\n']) {
            return Err(Error::Config(format!(
                "vector id {id:?} must be non-empty without tabs"
            )));
        }
        if values.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                actual: values.len(),
            });
        }
        out.push_str(id);
        out.push('\t');
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_vector_file(input: &str, origin: &str) -> Result<VectorFile> {
    let mut lines = input.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    let (dim, count) = parse_header(header)
        .ok_or_else(|| Error::parse(origin, 1, "expected `#dim=<d> count=<n>`"))?;
    let mut file = VectorFile::new(dim);
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, line_no, "expected `id<TAB>values`"))?;
        if id.is_empty() {
            return Err(Error::parse(origin, line_no, "empty id"));
        }
        if !seen.insert(id) {
            return Err(Error::parse(origin, line_no, format!("duplicate id {id}")));
        }
        let values = rest
            .split(' ')
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| {
                Error::parse(
                    origin,
                    line_no,
                    "values must be finite decimals separated by single spaces",
                )
            })?;
        if values.len() != dim {
            return Err(Error::parse(
                origin,
                line_no,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        file.entries.push((id.to_string(), values));
    }
    if file.entries.len() != count {
        return Err(Error::parse(
            origin,
            1,
            format!(
                "header declares {count} vectors, file has {}",
                file.entries.len()
            ),
        ));
    }
    Ok(file)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("#dim=")?;
    let (dim, count) = rest.split_once(" count=")?;
    let dim: usize = dim.parse().ok()?;
    (dim > 0).then_some(())?;
    Some((dim, count.parse().ok()?))
}

pub fn read_vector_file(path: &Path) -> Result<VectorFile> {
    let input = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector_file(&input, &path.display().to_string())
}

pub fn write_vector_file(path: &Path, file: &VectorFile) -> Result<()> {
    std::fs::write(path, format_vector_file(file)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    variant: RetrievalVariant,
    query_text_dim: usize,
    query_out_dim: usize,
    max_context_tokens: usize,
    sum_position: SumTokenPosition,
    head_in_dim: Option<usize>,
    head_hidden: Option<usize>,
    head_out_dim: Option<usize>,
    activation: String,
    optimizer: String,
}

/// Rows of an input-major matrix plus its bias, as one vector file.
fn matrix_file(
    prefix: &str,
    bias_id: &str,
    w: &[f64],
    b: &[f64],
    cols: usize,
) -> Result<VectorFile> {
    let mut f = VectorFile::new(cols);
    for (i, row) in w.chunks(cols).enumerate() {
        f.push(format!("{prefix}.row{i}"), row.to_vec())?;
    }
    f.push(bias_id, b.to_vec())?;
    Ok(f)
}

fn read_matrix(
    f: &VectorFile,
    prefix: &str,
    bias_id: &str,
    rows: usize,
    cols: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if f.dim != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            actual: f.dim,
        });
    }
    let mut w = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let id = format!("{prefix}.row{i}");
        w.extend_from_slice(f.get(&id).ok_or_else(|| Error::MissingClip(id.clone()))?);
    }
    let b = f
        .get(bias_id)
        .ok_or_else(|| Error::MissingClip(bias_id.to_string()))?
        .to_vec();
    Ok((w, b))
}

pub fn save_model(dir: &Path, model: &RetrievalModel) -> Result<()> {
    model.check()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let enc = &model.encoder;
    let meta = ModelMeta {
        variant: model.variant,
        query_text_dim: enc.text_dim,
        query_out_dim: enc.out_dim,
        max_context_tokens: enc.max_context_tokens,
        sum_position: enc.sum_position,
        head_in_dim: model.head.as_ref().map(|h| h.in_dim),
        head_hidden: model.head.as_ref().map(|h| h.hidden),
        head_out_dim: model.head.as_ref().map(|h| h.out_dim),
        activation: ACTIVATION.to_string(),
        optimizer: OPTIMIZER.to_string(),
    };
    let meta_text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let meta_path = dir.join("model.toml");
    std::fs::write(&meta_path, meta_text).map_err(|e| Error::io(&meta_path, e))?;
    write_vector_file(
        &dir.join("query.vec"),
        &matrix_file("query", "query.bias", &enc.w, &enc.b, enc.out_dim)?,
    )?;
    if let Some(h) = &model.head {
        write_vector_file(
            &dir.join("fusion_layer1.vec"),
            &matrix_file("layer1", "bias1", &h.w1, &h.b1, h.hidden)?,
        )?;
        write_vector_file(
            &dir.join("fusion_layer2.vec"),
            &matrix_file("layer2", "bias2", &h.w2, &h.b2, h.out_dim)?,
        )?;
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<RetrievalModel> {
    let meta_path = dir.join("model.toml");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta = toml::from_str(&meta_text)
        .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
    if meta.activation != ACTIVATION {
        return Err(Error::Config(format!(
            "unsupported activation {}",
            meta.activation
        )));
    }
    let q = read_vector_file(&dir.join("query.vec"))?;
    let (w, b) = read_matrix(
        &q,
        "query",
        "query.bias",
        2 * meta.query_text_dim,
        meta.query_out_dim,
    )?;
    let encoder = QueryEncoder {
        text_dim: meta.query_text_dim,
        out_dim: meta.query_out_dim,
        w,
        b,
        max_context_tokens: meta.max_context_tokens,
        sum_position: meta.sum_position,
    };
    let head = match (meta.head_in_dim, meta.head_hidden, meta.head_out_dim) {
        (Some(in_dim), Some(hidden), Some(out_dim)) => {
            let l1 = read_vector_file(&dir.join("fusion_layer1.vec"))?;
            let (w1, b1) = read_matrix(&l1, "layer1", "bias1", in_dim, hidden)?;
            let l2 = read_vector_file(&dir.join("fusion_layer2.vec"))?;
            let (w2, b2) = read_matrix(&l2, "layer2", "bias2", hidden, out_dim)?;
            Some(FusionHead {
                in_dim,
                hidden,
                out_dim,
                w1,
                b1,
                w2,
                b2,
            })
        }
        _ => None,
    };
    let model = RetrievalModel {
        variant: meta.variant,
        encoder,
        head,
    };
    model.check()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_and_rejects() {
        let text = "#dim=2 count=2\na\t1 -0.5\nb\t0.25 3e-3\n";
        let f = parse_vector_file(text, "v").unwrap();
        assert_eq!(f.entries[1], ("b".to_string(), vec![0.25, 0.003]));
        assert!(parse_vector_file("#dim=2 count=3\na\t1 2\n", "v").is_err());
        assert!(matches!(
            parse_vector_file("#dim=2 count=1\na\t1\n", "v"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_vector_file("#dim=1 count=2\na\t1\na\t2\n", "v").is_err());
        assert!(parse_vector_file("#dim=1 count=1\na\tNaN\n", "v").is_err());
        assert!(parse_vector_file("dim=1 count=0\n", "v").is_err());
        assert_eq!(
            parse_vector_file("#dim=3 count=0\n", "v")
                .unwrap()
                .entries
                .len(),
            0
        );
    }

    proptest! {
        #[test]
        fn vector_files_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..8)) {
            let mut f = VectorFile::new(3);
            for (i, r) in rows.into_iter().enumerate() {
                f.push(format!("id{i}"), r).unwrap();
            }
            let text = format_vector_file(&f).unwrap();
            prop_assert_eq!(parse_vector_file(&text, "v").unwrap(), f);
        }
    }

    #[test]
    fn model_bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for variant in [RetrievalVariant::T, RetrievalVariant::Tv] {
            let model = RetrievalModel::init(variant, 5, 4, 3, Some(6), &mut rng);
            let sub = dir.path().join(variant.name());
            save_model(&sub, &model).unwrap();
            assert_eq!(load_model(&sub).unwrap(), model);
            let q = read_vector_file(&sub.join("query.vec")).unwrap();
            assert_eq!(q.entries.len(), 2 * 5 + 1);
        }
    }
}
