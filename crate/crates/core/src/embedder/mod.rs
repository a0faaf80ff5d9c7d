//! Frame-level network with statistics pooling, trained with an additive
//! angular margin objective plus an optional orig/anon contrastive term.
//!
//! Forward pass for one utterance `X` (`T × F`):
//!
//! ```text
//! X → standardize per bin → [affine → activation]* → mean ‖ std over frames → head → e
//! ```
//!
//! Standard deviations are pooled as `√(var + 1e-8)` so constant inputs keep
//! finite gradients.

mod archive;
mod loss;
mod train;

pub use archive::{
    parse_embedding_archive, parse_embedding_archive_binary, write_embedding_archive, write_embedding_archive_binary,
    SpeakerEmbedding,
};
pub use loss::{aam_loss, contrastive_loss, AamOutput, ContrastiveItem, ContrastiveOutput};
pub use train::{train_embedder, EpochLoss, FeatureStore, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{from_rows, to_rows};

pub const POOL_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Affine {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("bias of length {}", weight.nrows()),
                found: format!("{}", bias.len()),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: DMatrix::identity(n, n),
            bias: DVector::zeros(n),
        }
    }

    fn glorot(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-a..a)),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: DMatrix::zeros(self.outputs(), self.inputs()),
            bias: DVector::zeros(self.outputs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayer {
    pub affine: Affine,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    /// Logit scale `s`.
    pub scale: f64,
    /// Additive angular margin `m`, radians.
    pub margin: f64,
    /// Weight `λ` of the contrastive term.
    pub contrastive_weight: f64,
    /// Contrastive temperature `τ`.
    pub temperature: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            scale: 30.0,
            margin: 0.2,
            contrastive_weight: 0.5,
            temperature: 0.1,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.scale > 0.0
            && self.margin >= 0.0
            && self.contrastive_weight >= 0.0
            && self.temperature > 0.0
            && [self.scale, self.margin, self.contrastive_weight, self.temperature]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid loss hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderModel {
    /// Per-bin input standardization `(x − mean) · scale`.
    pub input_mean: DVector<f64>,
    pub input_scale: DVector<f64>,
    pub layers: Vec<FrameLayer>,
    pub head: Affine,
    /// `C × d` class weights, rows kept at unit norm.
    pub aam_weights: DMatrix<f64>,
    /// Speaker label of each class row.
    pub classes: Vec<String>,
    pub hyper: Hyper,
}

/// Intermediate activations kept for backpropagation.
pub(crate) struct ForwardCache {
    /// Input to each frame layer (standardized features first).
    inputs: Vec<DMatrix<f64>>,
    /// Output of the last frame layer.
    last: DMatrix<f64>,
    mean: DVector<f64>,
    std: DVector<f64>,
    pooled: DVector<f64>,
}

/// Parameter gradients with the same layout as the model.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub layers: Vec<Affine>,
    pub head: Affine,
    pub aam_weights: DMatrix<f64>,
}

impl EmbedderModel {
    /// Randomly initialized model with `hidden.len()` tanh frame layers.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        embedding_dim: usize,
        classes: Vec<String>,
        hyper: Hyper,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || embedding_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if classes.is_empty() {
            return Err(Error::InvalidConfig("at least one speaker class required".into()));
        }
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = input_dim;
        let mut layers = Vec::with_capacity(hidden.len());
        for &h in hidden {
            layers.push(FrameLayer {
                affine: Affine::glorot(&mut rng, width, h),
                activation: Activation::Tanh,
            });
            width = h;
        }
        let head = Affine::glorot(&mut rng, 2 * width, embedding_dim);
        let mut aam_weights = DMatrix::from_fn(classes.len(), embedding_dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        normalize_rows(&mut aam_weights);
        Ok(Self {
            input_mean: DVector::zeros(input_dim),
            input_scale: DVector::from_element(input_dim, 1.0),
            layers,
            head,
            aam_weights,
            classes,
            hyper,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.head.outputs()
    }

    fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        if self.input_scale.len() != width {
            return Err(Error::InvalidConfig("input_scale length".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.affine.inputs() != width {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} expects {} inputs, previous width is {width}",
                    l.affine.inputs()
                )));
            }
            width = l.affine.outputs();
        }
        if self.head.inputs() != 2 * width {
            return Err(Error::InvalidConfig(format!(
                "head expects {} inputs, pooled width is {}",
                self.head.inputs(),
                2 * width
            )));
        }
        if self.aam_weights.ncols() != self.embedding_dim() || self.aam_weights.nrows() != self.classes.len() {
            return Err(Error::InvalidConfig("aam_weights shape".into()));
        }
        self.hyper.validate()
    }

    pub(crate) fn forward(&self, x: &FeatureMatrix) -> Result<(DVector<f64>, ForwardCache)> {
        if x.n_bins() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} feature bins", self.input_dim()),
                found: format!("{}", x.n_bins()),
            });
        }
        let frames = x.n_frames();
        let mut h = DMatrix::from_fn(frames, x.n_bins(), |t, f| {
            (x.get(t, f) - self.input_mean[f]) * self.input_scale[f]
        });
        let mut inputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = &h * layer.affine.weight.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.affine.bias.transpose();
            }
            z.apply(|v| *v = layer.activation.apply(*v));
            inputs.push(std::mem::replace(&mut h, z));
        }

        let n = frames as f64;
        let mean: DVector<f64> = h.row_mean().transpose();
        let std = DVector::from_fn(h.ncols(), |k, _| {
            let var = h.column(k).iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / n;
            (var + POOL_EPS).sqrt()
        });
        let pooled = DVector::from_iterator(2 * h.ncols(), mean.iter().chain(std.iter()).copied());
        let e = &self.head.weight * &pooled + &self.head.bias;
        Ok((
            e,
            ForwardCache {
                inputs,
                last: h,
                mean,
                std,
                pooled,
            },
        ))
    }

    /// Embedding of one feature matrix.
    pub fn embed(&self, x: &FeatureMatrix) -> Result<DVector<f64>> {
        let (e, _) = self.forward(x)?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(e)
    }

    /// Accumulates parameter gradients for `dL/de = grad_e` into `acc`.
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_e: &DVector<f64>, acc: &mut Gradients) {
        acc.head.weight += grad_e * cache.pooled.transpose();
        acc.head.bias += grad_e;
        let g_pooled = self.head.weight.transpose() * grad_e;
        let width = cache.mean.len();
        let frames = cache.last.nrows();
        let n = frames as f64;

        let mut g = DMatrix::from_fn(frames, width, |t, k| {
            let g_mean = g_pooled[k] / n;
            let g_std = g_pooled[width + k] * (cache.last[(t, k)] - cache.mean[k]) / (n * cache.std[k]);
            g_mean + g_std
        });
        let mut out = &cache.last;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // g: dL/d(output of layer i); convert to dL/dz
            for (gv, o) in g.iter_mut().zip(out.iter()) {
                *gv *= layer.activation.slope(*o);
            }
            let input = &cache.inputs[i];
            acc.layers[i].weight += g.transpose() * input;
            acc.layers[i].bias += g.row_sum().transpose();
            if i > 0 {
                g = &g * &layer.affine.weight;
            }
            out = input;
        }
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| l.affine.zeros_like()).collect(),
            head: self.head.zeros_like(),
            aam_weights: DMatrix::zeros(self.aam_weights.nrows(), self.aam_weights.ncols()),
        }
    }

    pub(crate) fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            l.affine.weight -= &gl.weight * lr;
            l.affine.bias -= &gl.bias * lr;
        }
        self.head.weight -= &g.head.weight * lr;
        self.head.bias -= &g.head.bias * lr;
        self.aam_weights -= &g.aam_weights * lr;
        normalize_rows(&mut self.aam_weights);
    }

    pub(crate) fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .map(|l| &l.affine)
            .chain(std::iter::once(&self.head))
            .all(|a| a.weight.iter().chain(a.bias.iter()).all(|v| v.is_finite()))
            && self.aam_weights.iter().all(|v| v.is_finite())
    }

    pub fn aam_loss(&self, e: &DVector<f64>, label: usize) -> Result<AamOutput> {
        aam_loss(&self.aam_weights, self.hyper.scale, self.hyper.margin, e, label)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            input_dim: self.input_dim(),
            embedding_dim: self.embedding_dim(),
            input_mean: self.input_mean.iter().copied().collect(),
            input_scale: self.input_scale.iter().copied().collect(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    activation: l.activation,
                    weight: to_rows(&l.affine.weight),
                    bias: l.affine.bias.iter().copied().collect(),
                })
                .collect(),
            head: AffineFile {
                weight: to_rows(&self.head.weight),
                bias: self.head.bias.iter().copied().collect(),
            },
            aam_weights: to_rows(&self.aam_weights),
            classes: self.classes.clone(),
            hyper: self.hyper.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        let layers = f
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(FrameLayer {
                    affine: Affine::new(
                        from_rows(&l.weight, &format!("layer {i} weight"))?,
                        DVector::from_vec(l.bias.clone()),
                    )?,
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            input_mean: DVector::from_vec(f.input_mean),
            input_scale: DVector::from_vec(f.input_scale),
            layers,
            head: Affine::new(
                from_rows(&f.head.weight, "head weight")?,
                DVector::from_vec(f.head.bias),
            )?,
            aam_weights: from_rows(&f.aam_weights, "aam_weights")?,
            classes: f.classes,
            hyper: f.hyper,
        };
        model.validate()?;
        if model.input_dim() != f.input_dim || model.embedding_dim() != f.embedding_dim {
            return Err(Error::InvalidConfig("declared dimensions disagree with weights".into()));
        }
        Ok(model)
    }
}

pub(crate) fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    activation: Activation,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    input_dim: usize,
    embedding_dim: usize,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    layers: Vec<LayerFile>,
    head: AffineFile,
    aam_weights: Vec<Vec<f64>>,
    classes: Vec<String>,
    hyper: Hyper,
}
