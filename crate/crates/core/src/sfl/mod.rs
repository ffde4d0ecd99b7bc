//! Span-focused distillation: edit-span extraction, marker insertion,
//! span weights, the weighted NLL and marker embedding initialization.

mod dataset;
mod tokenize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    build_distill_dataset, distill_dataset, distill_pairs, distill_size, DistillMeta, DistillPair, DistillRecord,
    DISTILL_SCHEMA_VERSION, DISTILL_SEED,
};
pub use tokenize::{Tokenizer, WordPunct};

pub const EDIT_START: &str = "<<EDIT_START>>";
pub const EDIT_END: &str = "<<EDIT_END>>";

pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const DEFAULT_GAMMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SflError {
    #[error("sequences are identical")]
    Identical,
    #[error("span k={k} len={len} does not fit {n} tokens")]
    SpanOutOfRange { k: usize, len: usize, n: usize },
    #[error("padded length {padded} is shorter than the sequence ({len})")]
    TooShort { padded: usize, len: usize },
    #[error("lambda_edit {0} must be finite and at least 1")]
    BadLambda(f64),
    #[error("{logprobs} log-probabilities for {weights} weights")]
    LengthMismatch { logprobs: usize, weights: usize },
    #[error("weights sum to zero")]
    ZeroWeights,
    #[error("invalid value at position {index}: {detail}")]
    BadValue { index: usize, detail: String },
    #[error("gamma {0} is negative")]
    NegativeGamma(f64),
    #[error("embedding statistics: {0}")]
    BadStats(String),
    #[error("target must hold exactly one start marker before one end marker")]
    BadMarkers,
    #[error("revised function does not parse: {0}")]
    Unparseable(String),
    #[error("{0}")]
    Pipeline(String),
}

/// Token sequence tagged with the tokenizer that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub tokenizer_id: String,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>, tokenizer_id: &str) -> Self {
        TokenSeq { tokens, tokenizer_id: tokenizer_id.to_owned() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.concat()
    }
}

/// Edited region of the target: tokens `k ..= k + m` (1-based), i.e.
/// `len = m + 1` tokens. A pure deletion has `len == 0` and `k` names the
/// position the markers sit before.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpan {
    pub k: usize,
    pub len: usize,
}

impl EditSpan {
    /// `m` of the `[k, k+m]` notation; `None` for a pure deletion.
    pub fn m(&self) -> Option<usize> {
        self.len.checked_sub(1)
    }

    fn start(&self) -> usize {
        self.k - 1
    }
}

/// Longest common prefix, then longest common suffix of what remains.
pub fn diff_span(f: &[String], fstar: &[String]) -> Result<EditSpan, SflError> {
    if f == fstar {
        return Err(SflError::Identical);
    }
    let p = f.iter().zip(fstar).take_while(|(a, b)| a == b).count();
    let cap = f.len().min(fstar.len()) - p;
    let s = f.iter().rev().zip(fstar.iter().rev()).take(cap).take_while(|(a, b)| a == b).count();
    Ok(EditSpan { k: p + 1, len: fstar.len() - p - s })
}

/// Reference for `diff_span`: tries every prefix/suffix split and keeps the
/// one with the most shared tokens, larger prefix first on ties.
pub fn diff_span_brute(f: &[String], fstar: &[String]) -> Option<EditSpan> {
    if f == fstar {
        return None;
    }
    let n = f.len().min(fstar.len());
    let mut best: Option<(usize, usize)> = None;
    for p in 0..=n {
        if f[..p] != fstar[..p] {
            continue;
        }
        for s in 0..=n - p {
            if f[f.len() - s..] != fstar[fstar.len() - s..] {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, bs)) => p + s > bp + bs || (p + s == bp + bs && p > bp),
            };
            if better {
                best = Some((p, s));
            }
        }
    }
    best.map(|(p, s)| EditSpan { k: p + 1, len: fstar.len() - p - s })
}

/// `y` with markers and the index range of the spanned tokens inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionTarget {
    pub y: TokenSeq,
    /// Half-open range of span tokens in `y` (markers excluded).
    pub span_range: (usize, usize),
}

impl SupervisionTarget {
    /// Recovers the span layout of an already marked sequence.
    pub fn from_marked(y: TokenSeq) -> Result<Self, SflError> {
        strip_markers(&y)?;
        let s = positions(&y.tokens, EDIT_START)[0];
        let e = positions(&y.tokens, EDIT_END)[0];
        Ok(SupervisionTarget { y, span_range: (s + 1, e) })
    }

    pub fn start_marker(&self) -> usize {
        self.span_range.0 - 1
    }

    pub fn end_marker(&self) -> usize {
        self.span_range.1
    }
}

pub fn insert_markers(fstar: &TokenSeq, span: EditSpan) -> Result<SupervisionTarget, SflError> {
    let n = fstar.len();
    if span.k == 0 || span.start() + span.len > n {
        return Err(SflError::SpanOutOfRange { k: span.k, len: span.len, n });
    }
    let (a, b) = (span.start(), span.start() + span.len);
    let mut y = Vec::with_capacity(n + 2);
    y.extend_from_slice(&fstar.tokens[..a]);
    y.push(EDIT_START.to_owned());
    y.extend_from_slice(&fstar.tokens[a..b]);
    y.push(EDIT_END.to_owned());
    y.extend_from_slice(&fstar.tokens[b..]);
    Ok(SupervisionTarget { y: TokenSeq::new(y, &fstar.tokenizer_id), span_range: (a + 1, b + 1) })
}

/// Removes the two markers; errors unless exactly one START precedes
/// exactly one END.
pub fn strip_markers(y: &TokenSeq) -> Result<TokenSeq, SflError> {
    let starts: Vec<usize> = positions(&y.tokens, EDIT_START);
    let ends: Vec<usize> = positions(&y.tokens, EDIT_END);
    match (starts.as_slice(), ends.as_slice()) {
        ([s], [e]) if s < e => Ok(TokenSeq::new(
            y.tokens.iter().filter(|t| *t != EDIT_START && *t != EDIT_END).cloned().collect(),
            &y.tokenizer_id,
        )),
        _ => Err(SflError::BadMarkers),
    }
}

fn positions(tokens: &[String], marker: &str) -> Vec<usize> {
    tokens.iter().enumerate().filter(|(_, t)| *t == marker).map(|(i, _)| i).collect()
}

/// Text form of a target with markers removed.
pub fn strip_marker_text(text: &str) -> String {
    text.replace(EDIT_START, "").replace(EDIT_END, "")
}

/// Per-token weights over a sequence padded to `padded_len`: `lambda` on
/// the markers and everything between them, 1 on other tokens, 0 on
/// padding.
pub fn weight_vector(y: &SupervisionTarget, lambda: f64, padded_len: usize) -> Result<Vec<f64>, SflError> {
    if !lambda.is_finite() || lambda < 1.0 {
        return Err(SflError::BadLambda(lambda));
    }
    let n = y.y.len();
    if padded_len < n {
        return Err(SflError::TooShort { padded: padded_len, len: n });
    }
    let (lo, hi) = (y.start_marker(), y.end_marker());
    Ok((0..padded_len)
        .map(|i| match i {
            _ if i >= n => 0.0,
            _ if (lo..=hi).contains(&i) => lambda,
            _ => 1.0,
        })
        .collect())
}

/// `-(sum w_i lp_i) / (sum w_i)`.
pub fn weighted_nll(logprobs: &[f64], w: &[f64]) -> Result<f64, SflError> {
    if logprobs.len() != w.len() {
        return Err(SflError::LengthMismatch { logprobs: logprobs.len(), weights: w.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&lp, &wi)) in logprobs.iter().zip(w).enumerate() {
        if !(wi >= 0.0 && wi.is_finite()) {
            return Err(SflError::BadValue { index: i, detail: format!("weight {wi}") });
        }
        if wi == 0.0 {
            continue;
        }
        if lp.is_nan() || lp > 0.0 {
            return Err(SflError::BadValue { index: i, detail: format!("log-probability {lp}") });
        }
        num += wi * lp;
        den += wi;
    }
    if den == 0.0 {
        return Err(SflError::ZeroWeights);
    }
    Ok(-num / den)
}

/// Whether statistics are kept per dimension or pooled into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    #[default]
    PerDimension,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub dim: usize,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: f64,
}

impl EmbeddingStats {
    /// Mean and population variance of the rows of an embedding matrix.
    /// In scalar mode every dimension gets the pooled mean and variance.
    pub fn from_matrix(rows: &[Vec<f64>], gamma: f64, mode: StatsMode) -> Result<Self, SflError> {
        let dim = rows
            .first()
            .map(Vec::len)
            .filter(|d| *d > 0)
            .ok_or_else(|| SflError::BadStats("embedding matrix is empty".into()))?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SflError::BadStats("ragged embedding matrix".into()));
        }
        let n = rows.len() as f64;
        let (mu, var) = match mode {
            StatsMode::PerDimension => {
                let mu: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
                let var = (0..dim).map(|j| rows.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / n).collect();
                (mu, var)
            }
            StatsMode::Scalar => {
                let all = n * dim as f64;
                let m = rows.iter().flatten().sum::<f64>() / all;
                let v = rows.iter().flatten().map(|x| (x - m).powi(2)).sum::<f64>() / all;
                (vec![m; dim], vec![v; dim])
            }
        };
        let stats = EmbeddingStats { dim, mu, var, gamma };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<(), SflError> {
        if self.gamma < 0.0 {
            return Err(SflError::NegativeGamma(self.gamma));
        }
        if !self.gamma.is_finite() {
            return Err(SflError::BadStats(format!("gamma {}", self.gamma)));
        }
        if self.mu.len() != self.dim || self.var.len() != self.dim {
            return Err(SflError::BadStats(format!(
                "dim {} but {} means and {} variances",
                self.dim,
                self.mu.len(),
                self.var.len()
            )));
        }
        if let Some(j) = self.var.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(SflError::BadStats(format!("variance {} at dimension {j}", self.var[j])));
        }
        Ok(())
    }
}

/// `mu + eps` with `eps_j ~ Normal(0, gamma * var_j)`, seeded.
pub fn embedding_init(stats: &EmbeddingStats, seed: u64) -> Result<Vec<f64>, SflError> {
    stats.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(stats
        .mu
        .iter()
        .zip(&stats.var)
        .map(|(&m, &v)| {
            let sd = (stats.gamma * v).sqrt();
            if sd == 0.0 {
                m
            } else {
                let normal = Normal::new(0.0, sd).expect("finite positive deviation");
                m + normal.sample(&mut rng)
            }
        })
        .collect())
}
