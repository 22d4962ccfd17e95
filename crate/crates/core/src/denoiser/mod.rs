//! Class-conditional noise predictor over 2D points.
//!
//! The network is a plain MLP on `[x_t, sin/cos embedding of t, one-hot label]`
//! with SiLU hidden activations. Gradients are computed by hand; the parameter
//! vector is flat so optimizers and finite-difference checks can treat it as
//! a single slice.

mod checkpoint;
mod data;
mod sample;
mod train;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::{rng, Error, Result, Vec2};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use data::{ClassParams, GaussianClass, TwoMarginalDataset};
pub use sample::ancestral_sample;
pub use train::{train, TrainConfig, TrainExample, Trainer};

/// Conditioning label. Classes are numbered from 1; `Null` drives the
/// unconditional branch of classifier-free guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Null,
    Class(u32),
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Null => f.write_str("null"),
            Label::Class(c) => write!(f, "{c}"),
        }
    }
}

/// Anything that predicts the injected noise `eps(x_t, y, t)`.
pub trait NoisePredictor {
    fn predict(&self, x_t: Vec2, y: Label, t: usize) -> Result<Vec2>;

    /// Classifier-free guidance: `eps_null + omega * (eps_y - eps_null)`,
    /// evaluated as `(1 - omega) * eps_null + omega * eps_y` so that
    /// `omega = 0` and `omega = 1` reproduce the endpoints bit-for-bit.
    fn cfg_predict(&self, x_t: Vec2, y: Label, t: usize, omega: f64) -> Result<Vec2> {
        let uncond = self.predict(x_t, Label::Null, t)?;
        if y == Label::Null {
            return Ok(uncond);
        }
        let cond = self.predict(x_t, y, t)?;
        Ok((1.0 - omega) * uncond + omega * cond)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn predict(&self, x_t: Vec2, y: Label, t: usize) -> Result<Vec2> {
        (**self).predict(x_t, y, t)
    }
}

/// Wraps a closure as a predictor; used for analytic oracles in tests.
pub struct FnPredictor<F>(pub F);

impl<F> NoisePredictor for FnPredictor<F>
where
    F: Fn(Vec2, Label, usize) -> Vec2,
{
    fn predict(&self, x_t: Vec2, y: Label, t: usize) -> Result<Vec2> {
        Ok((self.0)(x_t, y, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserArch {
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub t_embed_dim: usize,
    /// Number of diffusion steps the model was built for.
    pub steps: usize,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            num_classes: 2,
            t_embed_dim: 16,
            steps: 1000,
        }
    }
}

impl DenoiserArch {
    pub fn input_dim(&self) -> usize {
        2 + self.t_embed_dim + self.num_classes + 1
    }

    /// Full layer widths including input and the 2D output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim());
        sizes.extend_from_slice(&self.hidden);
        sizes.push(2);
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if !self.t_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "t_embed_dim must be even, got {}",
                self.t_embed_dim
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden widths must be positive".into(),
            ));
        }
        if self.steps < 2 {
            return Err(Error::InvalidConfig("steps must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    arch: DenoiserArch,
    params: Vec<f64>,
}

struct ForwardCache {
    /// Layer inputs: `inputs[0]` is the feature matrix, `inputs[l]` the
    /// activation feeding layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

impl Denoiser {
    /// Random initialisation, uniform in `±1/sqrt(fan_in)` for every layer.
    pub fn new(arch: DenoiserArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        for w in arch.layer_sizes().windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: DenoiserArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &DenoiserArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_output_layer(&mut self) {
        let sizes = self.arch.layer_sizes();
        let last = sizes[sizes.len() - 2] * 2 + 2;
        let n = self.params.len();
        self.params[n - last..].fill(0.0);
    }

    fn label_slot(&self, y: Label) -> Result<usize> {
        match y {
            Label::Null => Ok(0),
            Label::Class(c) if c >= 1 && (c as usize) <= self.arch.num_classes => Ok(c as usize),
            Label::Class(c) => Err(Error::InvalidLabel(format!(
                "class {c} outside 1..={}",
                self.arch.num_classes
            ))),
        }
    }

    fn write_features(&self, row: &mut [f64], x: Vec2, y: Label, t: usize) -> Result<()> {
        if t == 0 || t > self.arch.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                lo: 1,
                hi: self.arch.steps,
            });
        }
        let slot = self.label_slot(y)?;
        row.fill(0.0);
        row[0] = x.x;
        row[1] = x.y;
        let half = self.arch.t_embed_dim / 2;
        for k in 0..half {
            let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
            let phase = t as f64 * freq;
            row[2 + k] = phase.sin();
            row[2 + half + k] = phase.cos();
        }
        row[2 + self.arch.t_embed_dim + slot] = 1.0;
        Ok(())
    }

    fn features(&self, xs: &[Vec2], ys: &[Label], ts: &[usize]) -> Result<Array2<f64>> {
        debug_assert!(xs.len() == ys.len() && xs.len() == ts.len());
        let mut feats = Array2::zeros((xs.len(), self.arch.input_dim()));
        for (b, mut row) in feats.axis_iter_mut(Axis(0)).enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            self.write_features(row, xs[b], ys[b], ts[b])?;
        }
        Ok(feats)
    }

    /// Weight matrix `(out, in)` and bias of layer `l`, plus the offset just
    /// past them.
    fn layer(&self, offset: usize, fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let w_len = fan_in * fan_out;
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[offset..offset + w_len])
            .expect("parameter layout");
        let b = &self.params[offset + w_len..offset + w_len + fan_out];
        (w, b)
    }

    fn forward(&self, feats: Array2<f64>) -> ForwardCache {
        let sizes = self.arch.layer_sizes();
        let n_layers = sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        inputs.push(feats);
        let mut offset = 0;
        let mut output = None;
        for l in 0..n_layers {
            let (w, b) = self.layer(offset, sizes[l], sizes[l + 1]);
            offset += sizes[l] * sizes[l + 1] + sizes[l + 1];
            let mut z = inputs[l].dot(&w.t());
            for mut row in z.axis_iter_mut(Axis(0)) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
            if l + 1 == n_layers {
                output = Some(z);
            } else {
                inputs.push(z.mapv(silu));
                pre.push(z);
            }
        }
        ForwardCache {
            inputs,
            pre,
            output: output.expect("at least one layer"),
        }
    }

    /// Gradient of `sum(d_out * output)` with respect to the flat parameters.
    fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Vec<f64> {
        let sizes = self.arch.layer_sizes();
        let n_layers = sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out;
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let d_w = delta.t().dot(&cache.inputs[l]);
            grad[off..off + fan_in * fan_out]
                .copy_from_slice(d_w.as_standard_layout().as_slice().expect("contiguous"));
            let d_b = delta.sum_axis(Axis(0));
            grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]
                .copy_from_slice(d_b.as_slice().expect("contiguous"));
            if l > 0 {
                let (w, _) = self.layer(off, fan_in, fan_out);
                let mut d_in = delta.dot(&w);
                d_in.zip_mut_with(&cache.pre[l - 1], |g, &z| *g *= silu_grad(z));
                delta = d_in;
            }
        }
        grad
    }

    pub fn predict_batch(&self, xs: &[Vec2], ys: &[Label], ts: &[usize]) -> Result<Vec<Vec2>> {
        let out = self.forward(self.features(xs, ys, ts)?).output;
        Ok(out
            .axis_iter(Axis(0))
            .map(|r| Vec2::new(r[0], r[1]))
            .collect())
    }

    /// Guided predictions for a batch sharing one label and guidance weight.
    pub fn cfg_predict_batch(
        &self,
        xs: &[Vec2],
        y: Label,
        ts: &[usize],
        omega: f64,
    ) -> Result<Vec<Vec2>> {
        let uncond = self.predict_batch(xs, &vec![Label::Null; xs.len()], ts)?;
        if y == Label::Null {
            return Ok(uncond);
        }
        let cond = self.predict_batch(xs, &vec![y; xs.len()], ts)?;
        Ok(uncond
            .into_iter()
            .zip(cond)
            .map(|(u, c)| (1.0 - omega) * u + omega * c)
            .collect())
    }

    /// Weighted mean squared noise-prediction error over `examples` and its
    /// gradient with respect to the parameters.
    pub fn loss_and_grad(&self, examples: &[TrainExample]) -> Result<(f64, Vec<f64>)> {
        if examples.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let xs: Vec<Vec2> = examples.iter().map(|e| e.x_t).collect();
        let ys: Vec<Label> = examples.iter().map(|e| e.label).collect();
        let ts: Vec<usize> = examples.iter().map(|e| e.t).collect();
        let cache = self.forward(self.features(&xs, &ys, &ts)?);

        let n = examples.len() as f64;
        let mut loss = 0.0;
        let mut d_out = Array2::zeros((examples.len(), 2));
        for (b, e) in examples.iter().enumerate() {
            let r = Vec2::new(cache.output[[b, 0]], cache.output[[b, 1]]) - e.eps;
            loss += e.weight * r.norm_sq() / n;
            d_out[[b, 0]] = 2.0 * e.weight * r.x / n;
            d_out[[b, 1]] = 2.0 * e.weight * r.y / n;
        }
        Ok((loss, self.backward(&cache, d_out)))
    }

    /// Parameter gradient of `<cotangent, eps(x_t, y, t)>`.
    pub fn param_vjp(&self, x_t: Vec2, y: Label, t: usize, cotangent: Vec2) -> Result<Vec<f64>> {
        let cache = self.forward(self.features(&[x_t], &[y], &[t])?);
        let d_out =
            Array2::from_shape_vec((1, 2), vec![cotangent.x, cotangent.y]).expect("1x2 cotangent");
        Ok(self.backward(&cache, d_out))
    }
}

impl NoisePredictor for Denoiser {
    fn predict(&self, x_t: Vec2, y: Label, t: usize) -> Result<Vec2> {
        let mut feats = Array2::zeros((1, self.arch.input_dim()));
        self.write_features(feats.as_slice_mut().expect("standard layout"), x_t, y, t)?;
        let out = self.forward(feats).output;
        Ok(Vec2::new(out[[0, 0]], out[[0, 1]]))
    }
}
