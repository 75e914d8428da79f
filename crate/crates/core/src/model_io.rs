//! Text model files.
//!
//! A model file is one JSON document:
//!
//! ```text
//! {
//!   "version": 1,
//!   "n_states": 6,
//!   "n_obs": 2,
//!   "state_labels": ["partly_cloudy", ...],      (optional)
//!   "obs_labels": ["raincoat", "no_raincoat"],   (optional)
//!   "prior": [...],
//!   "transition": [[...], ...],                  (dense, row-major)
//!   "observation": {"row_starts": [...], "cols": [...], "vals": [...]}   (sparse)
//! }
//! ```
//!
//! Either matrix may be dense or sparse. Transition rows are next states and
//! columns current states; observation rows are observations. Numbers are
//! written with 17 significant digits, so a load reproduces every probability
//! bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::matrix::DenseMatrix;
use crate::sparse::CsrMatrix;
use crate::topp::TopPHmm;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixLayout {
    #[default]
    Dense,
    Sparse,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Dense(Vec<Vec<f64>>),
    Sparse { row_starts: Vec<usize>, cols: Vec<usize>, vals: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    n_states: usize,
    n_obs: usize,
    #[serde(default)]
    state_labels: Option<Vec<String>>,
    #[serde(default)]
    obs_labels: Option<Vec<String>>,
    prior: Vec<f64>,
    transition: MatrixRepr,
    observation: MatrixRepr,
}

impl MatrixRepr {
    fn into_dense(self, n_rows: usize, n_cols: usize, what: &str) -> Result<DenseMatrix> {
        let m = match self {
            Self::Dense(rows) => {
                if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
                    return Err(Error::Format(format!("{what} must be {n_rows}x{n_cols}")));
                }
                DenseMatrix::from_rows(&rows)?
            }
            Self::Sparse { row_starts, cols, vals } => {
                if cols.len() != vals.len() {
                    return Err(Error::Format(format!("{what}: cols and vals differ in length")));
                }
                let entries = cols.into_iter().zip(vals).collect();
                CsrMatrix::from_parts(n_rows, n_cols, row_starts, entries)
                    .map_err(|e| Error::Format(format!("{what}: {e}")))?
                    .to_dense()
            }
        };
        Ok(m)
    }
}

/// 17 significant digits in scientific notation; always valid JSON.
fn number(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String");
}

fn numbers(out: &mut String, xs: impl IntoIterator<Item = f64>) {
    out.push('[');
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        number(out, x);
    }
    out.push(']');
}

fn integers(out: &mut String, xs: &[usize]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{x}").expect("writing to a String");
    }
    out.push(']');
}

fn dense_matrix(out: &mut String, m: &DenseMatrix) {
    out.push_str("[\n");
    for (i, row) in m.rows().enumerate() {
        out.push_str("    ");
        numbers(out, row.iter().copied());
        out.push_str(if i + 1 < m.n_rows() { ",\n" } else { "\n" });
    }
    out.push_str("  ]");
}

fn sparse_matrix(out: &mut String, m: &CsrMatrix) {
    out.push_str("{\n    \"row_starts\": ");
    integers(out, m.row_starts());
    out.push_str(",\n    \"cols\": ");
    let cols: Vec<usize> = m.entries().iter().map(|e| e.0).collect();
    integers(out, &cols);
    out.push_str(",\n    \"vals\": ");
    numbers(out, m.entries().iter().map(|e| e.1));
    out.push_str("\n  }");
}

fn labels(out: &mut String, key: &str, labels: Option<&[String]>) {
    if let Some(l) = labels {
        let json = serde_json::to_string(l).expect("strings serialize");
        writeln!(out, "  \"{key}\": {json},").expect("writing to a String");
    }
}

enum Matrix<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a CsrMatrix),
}

fn render(hmm_like: (&Distribution, Matrix<'_>, Matrix<'_>), n_obs: usize, state_labels: Option<&[String]>, obs_labels: Option<&[String]>) -> String {
    let (prior, transition, observation) = hmm_like;
    let mut out = String::new();
    write!(out, "{{\n  \"version\": {FORMAT_VERSION},\n  \"n_states\": {},\n  \"n_obs\": {n_obs},\n", prior.len())
        .expect("writing to a String");
    labels(&mut out, "state_labels", state_labels);
    labels(&mut out, "obs_labels", obs_labels);
    out.push_str("  \"prior\": ");
    numbers(&mut out, prior.probs().iter().copied());
    for (key, m) in [("transition", transition), ("observation", observation)] {
        write!(out, ",\n  \"{key}\": ").expect("writing to a String");
        match m {
            Matrix::Dense(d) => dense_matrix(&mut out, d),
            Matrix::Sparse(s) => sparse_matrix(&mut out, s),
        }
    }
    out.push_str("\n}\n");
    out
}

pub fn model_to_string(hmm: &Hmm, layout: MatrixLayout) -> String {
    let (t, b);
    let (transition, observation) = match layout {
        MatrixLayout::Dense => (Matrix::Dense(hmm.transition()), Matrix::Dense(hmm.observation())),
        MatrixLayout::Sparse => {
            t = CsrMatrix::from_dense(hmm.transition(), 0.0);
            b = CsrMatrix::from_dense(hmm.observation(), 0.0);
            (Matrix::Sparse(&t), Matrix::Sparse(&b))
        }
    };
    render((hmm.prior(), transition, observation), hmm.n_obs(), hmm.state_labels(), hmm.obs_labels())
}

/// A top-p model written straight from its CSR matrices.
pub fn top_p_model_to_string(model: &TopPHmm<'_>) -> String {
    render(
        (&model.prior, Matrix::Sparse(&model.transition_csr), Matrix::Sparse(&model.observation_csr)),
        model.base.n_obs(),
        model.base.state_labels(),
        model.base.obs_labels(),
    )
}

pub fn model_from_str(text: &str) -> Result<Hmm> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", file.version)));
    }
    if file.prior.len() != file.n_states {
        return Err(Error::Format(format!("prior has {} entries, n_states is {}", file.prior.len(), file.n_states)));
    }
    let prior = Distribution::new(file.prior)?;
    let transition = file.transition.into_dense(file.n_states, file.n_states, "transition")?;
    let observation = file.observation.into_dense(file.n_obs, file.n_states, "observation")?;
    Hmm::new(prior, transition, observation)?.with_labels(file.state_labels, file.obs_labels)
}

pub fn write_model(path: impl AsRef<Path>, hmm: &Hmm, layout: MatrixLayout) -> Result<()> {
    std::fs::write(path, model_to_string(hmm, layout))?;
    Ok(())
}

pub fn write_top_p_model(path: impl AsRef<Path>, model: &TopPHmm<'_>) -> Result<()> {
    std::fs::write(path, top_p_model_to_string(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Hmm> {
    model_from_str(&std::fs::read_to_string(path)?)
}
