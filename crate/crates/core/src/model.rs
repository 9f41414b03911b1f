//! Linear scorer over bias-augmented features, plus plain-text persistence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{ArrayView2, ArrayViewMut2, ShapeBuilder};

use crate::error::{Result, SorrError};

const MAGIC: &str = "sorr-model";
const VERSION: &str = "v1";

/// Weight matrix of shape `(d + 1) x l`; the last row is the bias.
///
/// Columns are stored contiguously so a flat parameter slice is the matrix in
/// column-major order. A binary classifier has `l = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    params: Vec<f64>,
    dim: usize,
    outputs: usize,
}

/// Several label scorers sharing the same inputs.
pub type MultiLabelModel = LinearModel;

impl LinearModel {
    pub fn zeros(dim: usize, outputs: usize) -> Result<Self> {
        Self::from_params(vec![0.0; (dim + 1) * outputs], dim, outputs)
    }

    /// Wrap a flat column-major parameter vector of length `(dim + 1) * outputs`.
    pub fn from_params(params: Vec<f64>, dim: usize, outputs: usize) -> Result<Self> {
        if dim == 0 || outputs == 0 {
            return Err(SorrError::param(format!(
                "model needs d >= 1 and l >= 1, got d={dim}, l={outputs}"
            )));
        }
        if params.len() != (dim + 1) * outputs {
            return Err(SorrError::param(format!(
                "{} parameters for a {}x{outputs} weight matrix",
                params.len(),
                dim + 1
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(SorrError::param("model weights must be finite"));
        }
        Ok(LinearModel {
            params,
            dim,
            outputs,
        })
    }

    /// Feature dimension `d`, excluding the bias.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of output columns `l`.
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn theta(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.dim + 1, self.outputs).f(), &self.params)
            .expect("parameter length checked at construction")
    }

    pub fn theta_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.dim + 1, self.outputs).f(), &mut self.params)
            .expect("parameter length checked at construction")
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.params[j * w..(j + 1) * w]
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.iter().map(|v| v * v).sum()
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(SorrError::param(format!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Scores `θ_jᵀ[x; 1]` for every output column.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.outputs];
        scores_into(&self.params, self.dim, x, &mut out);
        Ok(out)
    }

    /// Binary margin `θᵀ[x; 1]` of a single-output model.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if self.outputs != 1 {
            return Err(SorrError::param(format!(
                "margin needs a single-output model, this one has {} outputs",
                self.outputs
            )));
        }
        self.check_input(x)?;
        Ok(affine(&self.params, x))
    }

    pub fn save(&self, path: &Path, loss: &str) -> Result<()> {
        fs::write(path, self.to_text(loss)).map_err(|e| SorrError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(|e| SorrError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Header line then one line of weights per column. `{}` formatting of
    /// `f64` is the shortest representation that parses back exactly.
    pub fn to_text(&self, loss: &str) -> String {
        let mut s = format!(
            "{MAGIC} {VERSION} d={} l={} loss={loss}\n",
            self.dim, self.outputs
        );
        for j in 0..self.outputs {
            let col = self.column(j);
            for (i, v) in col.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let bad = |msg: String| SorrError::Data(format!("model file: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MAGIC) {
            return Err(bad(format!("missing '{MAGIC}' header")));
        }
        match fields.next() {
            Some(VERSION) => {}
            other => return Err(bad(format!("unsupported version {other:?}"))),
        }
        let (mut dim, mut outputs, mut loss) = (None, None, None);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header field '{field}'")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad(format!("header field '{field}' is not an integer")))
            };
            match key {
                "d" => dim = Some(parse(value)?),
                "l" => outputs = Some(parse(value)?),
                "loss" => loss = Some(value.to_string()),
                _ => return Err(bad(format!("unknown header field '{key}'"))),
            }
        }
        let dim = dim.ok_or_else(|| bad("header lacks d".into()))?;
        let outputs = outputs.ok_or_else(|| bad("header lacks l".into()))?;
        let loss = loss.ok_or_else(|| bad("header lacks loss".into()))?;
        let params = lines
            .flat_map(str::split_whitespace)
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| bad(format!("weight '{tok}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Self::from_params(params, dim, outputs)?, loss))
    }
}

/// `wᵀ[x; 1]` where `w` has length `x.len() + 1`.
#[inline]
pub(crate) fn affine(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    dot(&w[..d], x) + w[d]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociation flags.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[j] += scale * [x; 1]` on the `j`-th column block of `grad`.
#[inline]
pub(crate) fn add_augmented(grad: &mut [f64], x: &[f64], scale: f64) {
    let d = x.len();
    for (g, v) in grad[..d].iter_mut().zip(x) {
        *g += scale * v;
    }
    grad[d] += scale;
}

pub(crate) fn scores_into(params: &[f64], dim: usize, x: &[f64], out: &mut [f64]) {
    let w = dim + 1;
    for (j, o) in out.iter_mut().enumerate() {
        *o = affine(&params[j * w..(j + 1) * w], x);
    }
}
