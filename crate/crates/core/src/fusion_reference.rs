//! Small double-precision reference for layout-aware input construction.
//!
//! Every text span contributes one layout token, produced by a two-layer MLP
//! over its normalized bounding box, followed by one token per character of
//! its text. The model input is that interleaved block, then the image
//! tokens, then the question tokens.
//!
//! Text and image embeddings are seeded stand-ins: the point is to check
//! ordering, shapes and the MLP's derivatives, not language or vision
//! semantics.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::layout_engine::{BBox, LayoutDocument};

/// Central-difference step used by [`gradcheck`].
pub const FD_EPSILON: f64 = 1e-6;
/// Floor for relative-error denominators.
pub const REL_ERR_FLOOR: f64 = 1e-8;

const TEXT_STREAM: u64 = 0x7465_7874;
const IMAGE_STREAM: u64 = 0x696d_6167;
const INIT_STREAM: u64 = 0x696e_6974;
const GRAD_STREAM: u64 = 0x6772_6164;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("bbox {bbox:?} lies outside the {width}x{height} page")]
    OutOfPage { bbox: BBox, width: u32, height: u32 },
    #[error("page dimensions must be positive")]
    EmptyPage,
    #[error("parameter shapes do not match the configuration: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("gradcheck needs at least one trial")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2)),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    /// Upper bound on `|derivative|`.
    pub fn lipschitz(self) -> f64 {
        match self {
            // max of Φ(x) + xφ(x), reached at x = √2
            Activation::Gelu => 1.129,
            Activation::Relu | Activation::Tanh => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub d: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub n_image_tokens: usize,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            d: 32,
            hidden: 64,
            activation: Activation::Gelu,
            n_image_tokens: 4,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.d == 0 || self.hidden == 0 {
            return Err(FusionError::InvalidConfig(
                "d and hidden must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// splitmix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ stream) ^ key))
}

fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.gen_range(-bound..=bound)))
}

/// Weights of the layout MLP: `W2 · act(W1 · b + c1) + c2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// hidden × 4
    pub w1: Array2<f64>,
    pub c1: Array1<f64>,
    /// d × hidden
    pub w2: Array2<f64>,
    pub c2: Array1<f64>,
}

impl MlpParams {
    /// Seeded uniform init in ±1/√fan_in for weights and biases alike.
    pub fn init(cfg: &FusionConfig) -> Self {
        let mut rng = stream_rng(cfg.seed, INIT_STREAM, 0);
        let b1 = 1.0 / 2.0; // 1/√4
        let b2 = 1.0 / (cfg.hidden as f64).sqrt();
        let w1 = Array2::from_shape_fn((cfg.hidden, 4), |_| rng.gen_range(-b1..=b1));
        let c1 = uniform_vector(&mut rng, cfg.hidden, b1);
        let w2 = Array2::from_shape_fn((cfg.d, cfg.hidden), |_| rng.gen_range(-b2..=b2));
        let c2 = uniform_vector(&mut rng, cfg.d, b2);
        Self { w1, c1, w2, c2 }
    }

    pub fn check_shapes(&self, cfg: &FusionConfig) -> Result<(), FusionError> {
        let expect = [
            ("w1", self.w1.dim(), (cfg.hidden, 4)),
            ("w2", self.w2.dim(), (cfg.d, cfg.hidden)),
            ("c1", (self.c1.len(), 1), (cfg.hidden, 1)),
            ("c2", (self.c2.len(), 1), (cfg.d, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(FusionError::ShapeMismatch(format!(
                    "{name} is {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(())
    }

    /// Global Lipschitz bound of the MLP under the Frobenius norm.
    pub fn lipschitz_bound(&self, activation: Activation) -> f64 {
        let fro = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
        fro(&self.w2) * activation.lipschitz() * fro(&self.w1)
    }
}

/// Page-relative box coordinates in `[0, 1]`.
pub fn normalize_bbox(
    b: &BBox,
    page_width: u32,
    page_height: u32,
) -> Result<[f64; 4], FusionError> {
    if page_width == 0 || page_height == 0 {
        return Err(FusionError::EmptyPage);
    }
    if b.x2 > page_width || b.y2 > page_height || b.x1 > b.x2 || b.y1 > b.y2 {
        return Err(FusionError::OutOfPage {
            bbox: *b,
            width: page_width,
            height: page_height,
        });
    }
    let (w, h) = (f64::from(page_width), f64::from(page_height));
    Ok([
        f64::from(b.x1) / w,
        f64::from(b.y1) / h,
        f64::from(b.x2) / w,
        f64::from(b.y2) / h,
    ])
}

fn pre_activation(b_norm: &[f64; 4], params: &MlpParams) -> Array1<f64> {
    params.w1.dot(&ArrayView1::from(&b_norm[..])) + &params.c1
}

pub fn layout_embed(b_norm: &[f64; 4], params: &MlpParams, cfg: &FusionConfig) -> Array1<f64> {
    let hidden = pre_activation(b_norm, params).mapv(|z| cfg.activation.apply(z));
    params.w2.dot(&hidden) + &params.c2
}

/// Analytic d × 4 Jacobian of [`layout_embed`].
pub fn layout_jacobian(b_norm: &[f64; 4], params: &MlpParams, cfg: &FusionConfig) -> Array2<f64> {
    let slope = pre_activation(b_norm, params).mapv(|z| cfg.activation.derivative(z));
    let scaled_w1 = &params.w1 * &slope.insert_axis(ndarray::Axis(1));
    params.w2.dot(&scaled_w1)
}

/// Central-difference d × 4 Jacobian of [`layout_embed`].
pub fn finite_difference_jacobian(
    b_norm: &[f64; 4],
    params: &MlpParams,
    cfg: &FusionConfig,
    eps: f64,
) -> Array2<f64> {
    let mut jac = Array2::zeros((params.w2.nrows(), 4));
    for k in 0..4 {
        let mut plus = *b_norm;
        let mut minus = *b_norm;
        plus[k] += eps;
        minus[k] -= eps;
        let diff =
            (layout_embed(&plus, params, cfg) - layout_embed(&minus, params, cfg)) / (2.0 * eps);
        jac.column_mut(k).assign(&diff);
    }
    jac
}

/// Largest relative error between analytic and finite-difference gradients.
///
/// Each output coordinate's gradient (a row of the Jacobian) is compared as
/// a vector: `‖g_analytic − g_fd‖ / max(‖g_analytic‖, ‖g_fd‖, 1e-8)`.
pub fn gradcheck(
    params: &MlpParams,
    cfg: &FusionConfig,
    trials: usize,
) -> Result<f64, FusionError> {
    if trials == 0 {
        return Err(FusionError::NoTrials);
    }
    cfg.validate()?;
    params.check_shapes(cfg)?;
    let mut rng = stream_rng(cfg.seed, GRAD_STREAM, trials as u64);
    let norm = |v: ArrayView1<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..=1.0));
        let analytic = layout_jacobian(&b, params, cfg);
        let numeric = finite_difference_jacobian(&b, params, cfg, FD_EPSILON);
        for (a, n) in analytic.rows().into_iter().zip(numeric.rows()) {
            let diff = norm((&a - &n).view());
            let denom = norm(a).max(norm(n)).max(REL_ERR_FLOOR);
            worst = worst.max(diff / denom);
        }
    }
    Ok(worst)
}

/// One d-vector per Unicode scalar value; equal characters map to equal
/// vectors regardless of position.
pub fn toy_text_embed(text: &str, cfg: &FusionConfig) -> Vec<Array1<f64>> {
    text.chars()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, TEXT_STREAM, u64::from(c));
            uniform_vector(&mut rng, cfg.d, 1.0)
        })
        .collect()
}

/// Fixed placeholder vectors standing in for vision-encoder output.
pub fn image_placeholders(cfg: &FusionConfig) -> Vec<Array1<f64>> {
    (0..cfg.n_image_tokens)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, IMAGE_STREAM, i as u64);
            uniform_vector(&mut rng, cfg.d, 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Layout,
    Text,
    Image,
    Question,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub embedding: Array1<f64>,
    pub kind: TokenKind,
    /// Owning span for layout and text positions.
    pub span_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSequence {
    pub positions: Vec<Position>,
}

impl FusionSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn kinds(&self) -> Vec<TokenKind> {
        self.positions.iter().map(|p| p.kind).collect()
    }

    /// Stacks the embeddings into a len × d matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        let d = self.positions.first().map_or(0, |p| p.embedding.len());
        let mut m = Array2::zeros((self.positions.len(), d));
        for (mut row, p) in m.rows_mut().into_iter().zip(&self.positions) {
            row.assign(&p.embedding);
        }
        m
    }

    /// Checks the block structure: per span one layout token then one or
    /// more text tokens (span indices 0, 1, 2, ...), then `n_image` image
    /// tokens, then only question tokens.
    pub fn check_block_order(&self, n_image: usize) -> Result<(), String> {
        let pos = &self.positions;
        let mut i = 0;
        let mut span = 0;
        while i < pos.len() && pos[i].kind == TokenKind::Layout {
            if pos[i].span_index != Some(span) {
                return Err(format!(
                    "layout token {i} has span {:?}, expected {span}",
                    pos[i].span_index
                ));
            }
            i += 1;
            let start = i;
            while i < pos.len() && pos[i].kind == TokenKind::Text {
                if pos[i].span_index != Some(span) {
                    return Err(format!("text token {i} belongs to the wrong span"));
                }
                i += 1;
            }
            if i == start {
                return Err(format!("span {span} has no text tokens"));
            }
            span += 1;
        }
        for _ in 0..n_image {
            match pos.get(i) {
                Some(p) if p.kind == TokenKind::Image && p.span_index.is_none() => i += 1,
                _ => return Err(format!("expected image token at {i}")),
            }
        }
        if let Some(j) = pos[i..]
            .iter()
            .position(|p| p.kind != TokenKind::Question || p.span_index.is_some())
        {
            return Err(format!(
                "unexpected {:?} token at {}",
                pos[i + j].kind,
                i + j
            ));
        }
        Ok(())
    }
}

/// Expected sequence length for a document and question.
pub fn expected_length(doc: &LayoutDocument, question: &str, cfg: &FusionConfig) -> usize {
    doc.spans.len()
        + doc
            .spans
            .iter()
            .map(|s| s.text.chars().count())
            .sum::<usize>()
        + cfg.n_image_tokens
        + question.chars().count()
}

pub fn assemble_sequence(
    doc: &LayoutDocument,
    question: &str,
    params: &MlpParams,
    cfg: &FusionConfig,
) -> Result<FusionSequence, FusionError> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    let mut positions = Vec::with_capacity(expected_length(doc, question, cfg));
    for (i, span) in doc.spans.iter().enumerate() {
        let b = normalize_bbox(&span.bbox, doc.page_width, doc.page_height)?;
        positions.push(Position {
            embedding: layout_embed(&b, params, cfg),
            kind: TokenKind::Layout,
            span_index: Some(i),
        });
        positions.extend(
            toy_text_embed(&span.text, cfg)
                .into_iter()
                .map(|e| Position {
                    embedding: e,
                    kind: TokenKind::Text,
                    span_index: Some(i),
                }),
        );
    }
    positions.extend(image_placeholders(cfg).into_iter().map(|e| Position {
        embedding: e,
        kind: TokenKind::Image,
        span_index: None,
    }));
    positions.extend(toy_text_embed(question, cfg).into_iter().map(|e| Position {
        embedding: e,
        kind: TokenKind::Question,
        span_index: None,
    }));
    Ok(FusionSequence { positions })
}
