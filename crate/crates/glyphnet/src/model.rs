//! The TI-CNN: a stack of stride-2 5x5 conv layers, one dense layer, and a
//! logits output, plus its training loop and checkpoint format.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::AugmentConfig;
use crate::augment::augment_sample;
use crate::datasets::LabeledText;
use crate::error::{Error, Result};
use crate::nn::gradcheck::{central_differences, max_rel_err, GradCheckReport, GroupReport};
use crate::nn::{
    conv2d_backward, conv2d_forward_im2col, dense_backward, dense_forward, relu_backward,
    relu_forward, softmax, softmax_cross_entropy, ConvParams, DenseParams, Optimizer,
    OptimizerAlgo, Padding,
};
use crate::nn::relu::{relu_backward_matrix, relu_forward_matrix};
use crate::raster::{image_to_tensor, render_text, GlyphFont, LayoutConfig};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_hw: (usize, usize),
    pub conv_layers: Vec<ConvLayerSpec>,
    pub dense_units: usize,
    pub num_outputs: usize,
    pub seed: u64,
}

/// The default 7-conv stack: three layers of 32 filters then four of 64,
/// all 5x5 stride 2.
pub fn default_conv_stack() -> Vec<ConvLayerSpec> {
    [32, 32, 32, 64, 64, 64, 64]
        .into_iter()
        .map(|filters| ConvLayerSpec {
            filters,
            kernel: 5,
            stride: 2,
        })
        .collect()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_hw: (128, 128),
            conv_layers: default_conv_stack(),
            dense_units: 128,
            num_outputs: 2,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_outputs == 0 {
            return Err(Error::InvalidArg("num_outputs must be >= 1".into()));
        }
        if self.conv_layers.is_empty() || self.dense_units == 0 {
            return Err(Error::InvalidArg("empty layer stack".into()));
        }
        self.spatial_trace()?;
        Ok(())
    }

    /// Spatial extent after each conv layer under same-padding.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        let (mut h, mut w) = self.input_hw;
        let mut trace = Vec::with_capacity(self.conv_layers.len());
        for (i, spec) in self.conv_layers.iter().enumerate() {
            h = h.div_ceil(spec.stride);
            w = w.div_ceil(spec.stride);
            if h == 0 || w == 0 {
                return Err(Error::InvalidArg(format!(
                    "conv stack collapses below 1x1 at layer {i}"
                )));
            }
            trace.push((h, w));
        }
        Ok(trace)
    }

    pub fn flattened_features(&self) -> Result<usize> {
        let trace = self.spatial_trace()?;
        let (h, w) = *trace.last().unwrap();
        Ok(self.conv_layers.last().unwrap().filters * h * w)
    }

    pub fn param_count(&self) -> Result<usize> {
        let mut total = 0usize;
        let mut in_c = 1usize;
        for spec in &self.conv_layers {
            total += spec.kernel * spec.kernel * in_c * spec.filters + spec.filters;
            in_c = spec.filters;
        }
        total += self.flattened_features()? * self.dense_units + self.dense_units;
        total += self.dense_units * self.num_outputs + self.num_outputs;
        Ok(total)
    }
}

#[derive(Debug, Clone)]
pub struct Model<S> {
    pub config: ModelConfig,
    pub convs: Vec<ConvParams<S>>,
    pub dense: DenseParams<S>,
    pub output: DenseParams<S>,
    /// Optimizer steps applied so far.
    pub step: u64,
    /// Shuffle seed of the most recent training run (checkpoint metadata).
    pub rng_state: u64,
}

fn he_uniform<S: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<S> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| S::from_acc(rng.gen_range(-limit..limit)))
        .collect()
}

impl<S: Scalar> Model<S> {
    /// Allocate and seed-initialize all parameters (He-uniform weights, zero
    /// biases).
    pub fn build(config: ModelConfig) -> Result<Model<S>> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut convs = Vec::with_capacity(config.conv_layers.len());
        let (mut h, mut w) = config.input_hw;
        let mut in_c = 1usize;
        for spec in &config.conv_layers {
            let fan_in = in_c * spec.kernel * spec.kernel;
            let weights = Tensor::new(
                [spec.filters, in_c, spec.kernel, spec.kernel],
                he_uniform(&mut rng, fan_in, spec.filters * fan_in),
            )?;
            let padding = Padding::same(h, w, spec.kernel, spec.kernel, spec.stride);
            convs.push(ConvParams::new(
                weights,
                vec![S::zero(); spec.filters],
                spec.stride,
                padding,
            )?);
            h = h.div_ceil(spec.stride);
            w = w.div_ceil(spec.stride);
            in_c = spec.filters;
        }
        let flat = config.flattened_features()?;
        let dense = DenseParams::new(
            Matrix::new(
                config.dense_units,
                flat,
                he_uniform(&mut rng, flat, config.dense_units * flat),
            )?,
            vec![S::zero(); config.dense_units],
        )?;
        let output = DenseParams::new(
            Matrix::new(
                config.num_outputs,
                config.dense_units,
                he_uniform(&mut rng, config.dense_units, config.num_outputs * config.dense_units),
            )?,
            vec![S::zero(); config.num_outputs],
        )?;
        Ok(Model {
            config,
            convs,
            dense,
            output,
            step: 0,
            rng_state: 0,
        })
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<()> {
        let (h, w) = self.config.input_hw;
        if batch.channels() != 1 || batch.height() != h || batch.width() != w {
            return Err(Error::shape(
                "Model::forward",
                format!("(N,1,{h},{w})"),
                format!("{:?}", batch.shape()),
            ));
        }
        Ok(())
    }

    /// Logits for a batch of shape (N, 1, H, W).
    pub fn forward(&self, batch: &Tensor<S>) -> Result<Matrix<S>> {
        Ok(self.forward_cached(batch)?.0)
    }

    pub(crate) fn forward_cached(&self, batch: &Tensor<S>) -> Result<(Matrix<S>, ForwardCache<S>)> {
        self.check_batch(batch)?;
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut conv_preacts = Vec::with_capacity(self.convs.len());
        let mut x = batch.clone();
        for conv in &self.convs {
            let z = conv2d_forward_im2col(&x, conv)?;
            let a = relu_forward(&z);
            conv_inputs.push(x);
            conv_preacts.push(z);
            x = a;
        }
        let flat = x.flatten();
        let dense_pre = dense_forward(&flat, &self.dense)?;
        let dense_act = relu_forward_matrix(&dense_pre);
        let logits = dense_forward(&dense_act, &self.output)?;
        logits.check_finite("Model::forward logits")?;
        Ok((
            logits,
            ForwardCache {
                conv_inputs,
                conv_preacts,
                last_shape: x.shape(),
                flat,
                dense_pre,
                dense_act,
            },
        ))
    }

    pub(crate) fn backward(&self, cache: &ForwardCache<S>, dlogits: &Matrix<S>) -> Result<Grads<S>> {
        let out_g = dense_backward(&cache.dense_act, &self.output, dlogits)?;
        let d_dense_pre = relu_backward_matrix(&cache.dense_pre, &out_g.dinput)?;
        let dense_g = dense_backward(&cache.flat, &self.dense, &d_dense_pre)?;
        let mut d_act = Tensor::new(cache.last_shape, dense_g.dinput.data().to_vec())?;
        let mut conv_grads = Vec::with_capacity(self.convs.len());
        for (conv, (x, z)) in self
            .convs
            .iter()
            .zip(cache.conv_inputs.iter().zip(&cache.conv_preacts))
            .rev()
        {
            let d_z = relu_backward(z, &d_act)?;
            let g = conv2d_backward(x, conv, &d_z)?;
            d_act = g.dinput.clone();
            conv_grads.push((g.dweights, g.dbias));
        }
        conv_grads.reverse();
        Ok(Grads {
            convs: conv_grads,
            dense: (dense_g.dweights, dense_g.dbias),
            output: (out_g.dweights, out_g.dbias),
        })
    }

    /// Parameter group sizes in optimizer order.
    pub fn param_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for c in &self.convs {
            sizes.push(c.weights.len());
            sizes.push(c.bias.len());
        }
        sizes.push(self.dense.weights.data().len());
        sizes.push(self.dense.bias.len());
        sizes.push(self.output.weights.data().len());
        sizes.push(self.output.bias.len());
        sizes
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut out: Vec<&mut [S]> = Vec::new();
        for c in &mut self.convs {
            out.push(c.weights.data_mut());
            out.push(&mut c.bias);
        }
        out.push(self.dense.weights.data_mut());
        out.push(&mut self.dense.bias);
        out.push(self.output.weights.data_mut());
        out.push(&mut self.output.bias);
        out
    }

    pub fn total_params(&self) -> usize {
        self.param_sizes().iter().sum()
    }

    /// One optimizer step on a prepared batch; returns the loss.
    pub fn train_step(
        &mut self,
        batch: &Tensor<S>,
        labels: &[usize],
        optimizer: &mut Optimizer<S>,
    ) -> Result<S> {
        let (logits, cache) = self.forward_cached(batch)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&cache, &dlogits)?;
        let grad_slices = grads.slices();
        let mut params = self.param_slices_mut();
        optimizer.step(&mut params, &grad_slices)?;
        self.step += 1;
        Ok(loss)
    }
}

pub(crate) struct ForwardCache<S> {
    conv_inputs: Vec<Tensor<S>>,
    conv_preacts: Vec<Tensor<S>>,
    last_shape: [usize; 4],
    flat: Matrix<S>,
    dense_pre: Matrix<S>,
    dense_act: Matrix<S>,
}

pub struct Grads<S> {
    pub convs: Vec<(Tensor<S>, Vec<S>)>,
    pub dense: (Matrix<S>, Vec<S>),
    pub output: (Matrix<S>, Vec<S>),
}

impl<S: Scalar> Grads<S> {
    pub fn slices(&self) -> Vec<&[S]> {
        let mut out: Vec<&[S]> = Vec::new();
        for (w, b) in &self.convs {
            out.push(w.data());
            out.push(b);
        }
        out.push(self.dense.0.data());
        out.push(&self.dense.1);
        out.push(self.output.0.data());
        out.push(&self.output.1);
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// None = clean renders (evaluation-style) during training too.
    pub augment: Option<AugmentConfig>,
    pub shuffle_seed: u64,
    /// Validate every this many epochs (0 or 1 = every epoch); the final
    /// epoch is always validated.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            epochs: 10,
            learning_rate: 0.01,
            momentum: 0.9,
            augment: Some(AugmentConfig::default()),
            shuffle_seed: 1,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub samples: usize,
    pub seconds: f64,
}

impl EvalReport {
    pub fn from_confusion(loss: f64, confusion: Vec<Vec<usize>>, seconds: f64) -> EvalReport {
        let total: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
        let correct: usize = confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
        EvalReport {
            loss,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            confusion,
            samples: total,
            seconds,
        }
    }
}

/// Render one classification sample, augmented when configured.
fn render_sample<S: Scalar>(
    text: &str,
    font: &GlyphFont,
    layout: &LayoutConfig,
    augment: Option<&AugmentConfig>,
    epoch: usize,
    dataset_index: usize,
) -> Result<Tensor<S>> {
    let image = match augment {
        Some(cfg) if !cfg.is_identity() => {
            let mut rng = cfg.sample_rng(epoch as u64, dataset_index as u64);
            augment_sample(text, font, layout, cfg, &mut rng)?
        }
        _ => render_text(text, font, layout)?,
    };
    Ok(image_to_tensor(&image))
}

/// Stack single-sample tensors into one batch.
pub fn stack_batch<S: Scalar>(samples: &[Tensor<S>]) -> Result<Tensor<S>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArg("empty batch".into()))?;
    let [_, c, h, w] = first.shape();
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.shape() != [1, c, h, w] {
            return Err(Error::shape("stack_batch", format!("[1,{c},{h},{w}]"), format!("{:?}", s.shape())));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new([samples.len(), c, h, w], data)
}

/// Train on labeled texts, rendering (and augmenting) on the fly.
pub fn train<S: Scalar>(
    model: &mut Model<S>,
    train_data: &[LabeledText],
    val_data: &[LabeledText],
    cfg: &TrainConfig,
    font: &GlyphFont,
    layout: &LayoutConfig,
) -> Result<Vec<EpochReport>> {
    if train_data.is_empty() {
        return Err(Error::InvalidArg("empty training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArg("batch_size and epochs must be >= 1".into()));
    }
    let mut optimizer = Optimizer::new(
        if cfg.momentum > 0.0 {
            OptimizerAlgo::Momentum { mu: cfg.momentum }
        } else {
            OptimizerAlgo::Sgd
        },
        cfg.learning_rate,
        &model.param_sizes(),
    )?;
    model.rng_state = cfg.shuffle_seed;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut recent_losses: Vec<f64> = Vec::new();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            cfg.shuffle_seed.wrapping_add(epoch as u64),
        ));
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let rendered: Vec<Result<Tensor<S>>> = chunk
                .par_iter()
                .map(|&i| {
                    render_sample(
                        &train_data[i].text,
                        font,
                        layout,
                        cfg.augment.as_ref(),
                        epoch,
                        i,
                    )
                })
                .collect();
            let mut tensors = Vec::with_capacity(chunk.len());
            for r in rendered {
                tensors.push(r?);
            }
            let batch = stack_batch(&tensors)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data[i].label).collect();
            // Exploded weights surface either as a non-finite loss or as a
            // NonFinite error from the forward pass; both mean divergence.
            let loss = match model.train_step(&batch, &labels, &mut optimizer) {
                Ok(l) => l.to_acc(),
                Err(Error::NonFinite { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: model.step as usize,
                    loss,
                    lr: cfg.learning_rate,
                    history: recent_losses.clone(),
                });
            }
            recent_losses.push(loss);
            if recent_losses.len() > 5 {
                recent_losses.remove(0);
            }
            loss_sum += loss;
            batches += 1;
        }
        let validate_now = cfg.eval_every <= 1
            || (epoch + 1) % cfg.eval_every == 0
            || epoch + 1 == cfg.epochs;
        let val_accuracy = if val_data.is_empty() || !validate_now {
            f64::NAN
        } else {
            match evaluate(model, val_data, font, layout) {
                Ok(report) => report.accuracy,
                // Weights that overflow between the last step and validation
                // are a divergence, same as a non-finite training loss.
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        step: model.step as usize,
                        loss: f64::NAN,
                        lr: cfg.learning_rate,
                        history: recent_losses.clone(),
                    })
                }
                Err(e) => return Err(e),
            }
        };
        history.push(EpochReport {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

/// Accuracy and confusion matrix over clean renders.
pub fn evaluate<S: Scalar>(
    model: &Model<S>,
    data: &[LabeledText],
    font: &GlyphFont,
    layout: &LayoutConfig,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidArg("empty evaluation set".into()));
    }
    let start = Instant::now();
    let k = model.config.num_outputs;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss_sum = 0.0f64;
    for chunk in data.chunks(64) {
        let rendered: Vec<Result<Tensor<S>>> = chunk
            .par_iter()
            .map(|s| render_sample(&s.text, font, layout, None, 0, 0))
            .collect();
        let mut tensors = Vec::with_capacity(chunk.len());
        for r in rendered {
            tensors.push(r?);
        }
        let batch = stack_batch(&tensors)?;
        let logits = model.forward(&batch)?;
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss.to_acc() * chunk.len() as f64;
        for (r, s) in chunk.iter().enumerate() {
            let row = logits.row(r);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            confusion[s.label][pred] += 1;
        }
    }
    Ok(EvalReport::from_confusion(
        loss_sum / data.len() as f64,
        confusion,
        start.elapsed().as_secs_f64(),
    ))
}

/// Softmax probability of the positive class (index 1) for a clean render.
pub fn predict_positivity<S: Scalar>(
    model: &Model<S>,
    text: &str,
    font: &GlyphFont,
    layout: &LayoutConfig,
) -> Result<f64> {
    if model.config.num_outputs != 2 {
        return Err(Error::InvalidArg(format!(
            "positivity needs a binary model, checkpoint has {} outputs",
            model.config.num_outputs
        )));
    }
    let tensor = render_sample::<S>(text, font, layout, None, 0, 0)?;
    let logits = model.forward(&tensor)?;
    Ok(softmax(&logits).at(0, 1).to_acc())
}

// ---------------------------------------------------------------------------
// Gradient verification (runs the model in f64).

impl Model<f64> {
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_params());
        for c in &self.convs {
            out.extend_from_slice(c.weights.data());
            out.extend_from_slice(&c.bias);
        }
        out.extend_from_slice(self.dense.weights.data());
        out.extend_from_slice(&self.dense.bias);
        out.extend_from_slice(self.output.weights.data());
        out.extend_from_slice(&self.output.bias);
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut pos = 0usize;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&flat[pos..pos + slice.len()]);
            pos += slice.len();
        }
        assert_eq!(pos, flat.len());
    }

    fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.convs.len() {
            names.push(format!("conv{i}.weights"));
            names.push(format!("conv{i}.bias"));
        }
        names.extend(["dense.weights", "dense.bias", "output.weights", "output.bias"].map(String::from));
        names
    }

    /// Compare backprop gradients against central finite differences on every
    /// parameter, reporting the worst relative error per parameter group.
    ///
    /// Step is 1e-3; coordinates that fail are re-measured at 1e-5, which
    /// resolves spurious mismatches from finite differences stepping across a
    /// ReLU kink.
    pub fn gradient_check(
        &mut self,
        batch: &Tensor<f64>,
        labels: &[usize],
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let (_, cache) = self.forward_cached(batch)?;
        let (_, dlogits) = {
            let logits = dense_forward(&cache.dense_act, &self.output)?;
            softmax_cross_entropy(&logits, labels)?
        };
        let grads = self.backward(&cache, &dlogits)?;
        let analytic: Vec<f64> = grads.slices().concat();

        let mut flat = self.flat_params();
        let scratch = std::cell::RefCell::new(Model::<f64>::build(self.config.clone())?);
        let loss_at = |p: &[f64]| -> f64 {
            let mut m = scratch.borrow_mut();
            m.set_flat_params(p);
            let logits = m.forward(batch).expect("forward");
            softmax_cross_entropy(&logits, labels).expect("loss").0
        };

        let mut numeric = central_differences(&mut |p: &[f64]| loss_at(p), &mut flat, 1e-3, &|_| false);
        let f0 = loss_at(&flat);
        for i in 0..numeric.len() {
            let denom = analytic[i].abs().max(numeric[i].abs());
            if denom > 1e-6 && (analytic[i] - numeric[i]).abs() / denom > tolerance {
                // Suspected ReLU kink inside the central-difference interval
                // (a zero preactivation makes the loss one-sidedly linear).
                // The analytic gradient is then one of the one-sided slopes;
                // re-measure both at a smaller step and keep the closer one.
                let orig = flat[i];
                let step = 1e-5;
                flat[i] = orig + step;
                let fp = loss_at(&flat);
                flat[i] = orig - step;
                let fm = loss_at(&flat);
                flat[i] = orig;
                let forward = (fp - f0) / step;
                let backward = (f0 - fm) / step;
                numeric[i] = if (forward - analytic[i]).abs() <= (backward - analytic[i]).abs() {
                    forward
                } else {
                    backward
                };
            }
        }

        let sizes = self.param_sizes();
        let names = self.group_names();
        let mut groups = Vec::with_capacity(sizes.len());
        let mut pos = 0usize;
        for (name, size) in names.into_iter().zip(sizes) {
            groups.push(GroupReport {
                name,
                max_rel_err: max_rel_err(&analytic[pos..pos + size], &numeric[pos..pos + size]),
            });
            pos += size;
        }
        Ok(GradCheckReport {
            groups,
            tolerance,
        })
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: magic `TICN`, u16 version, little-endian throughout.

const MAGIC: &[u8; 4] = b"TICN";
const VERSION: u16 = 1;

fn write_u16(w: &mut impl Write, v: u16) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint file".into()))?;
    Ok(buf)
}
fn read_u16(r: &mut impl Read) -> Result<u16> {
    Ok(u16::from_le_bytes(read_exact::<2>(r)?))
}
fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}
fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn write_param_block(w: &mut impl Write, dims: &[usize], data: &[f32]) -> Result<()> {
    write_u32(w, dims.len() as u32)?;
    for &d in dims {
        write_u32(w, d as u32)?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_param_block(r: &mut impl Read, expect_dims: &[usize]) -> Result<Vec<f32>> {
    let ndim = read_u32(r)? as usize;
    if ndim != expect_dims.len() {
        return Err(Error::Checkpoint(format!(
            "tensor rank mismatch: expected {}, got {ndim}",
            expect_dims.len()
        )));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(read_u32(r)? as usize);
    }
    if dims != expect_dims {
        return Err(Error::Checkpoint(format!(
            "tensor shape disagrees with config: expected {expect_dims:?}, got {dims:?}"
        )));
    }
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f32::from_le_bytes(read_exact::<4>(r)?));
    }
    Ok(data)
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u16(&mut w, VERSION)?;
    let cfg = &model.config;
    write_u32(&mut w, cfg.input_hw.0 as u32)?;
    write_u32(&mut w, cfg.input_hw.1 as u32)?;
    write_u32(&mut w, cfg.conv_layers.len() as u32)?;
    for spec in &cfg.conv_layers {
        write_u32(&mut w, spec.filters as u32)?;
        write_u32(&mut w, spec.kernel as u32)?;
        write_u32(&mut w, spec.stride as u32)?;
    }
    write_u32(&mut w, cfg.dense_units as u32)?;
    write_u32(&mut w, cfg.num_outputs as u32)?;
    write_u64(&mut w, cfg.seed)?;
    write_u64(&mut w, model.step)?;
    write_u64(&mut w, model.rng_state)?;
    for c in &model.convs {
        write_param_block(&mut w, &c.weights.shape(), c.weights.data())?;
        write_param_block(&mut w, &[c.bias.len()], &c.bias)?;
    }
    write_param_block(
        &mut w,
        &[model.dense.weights.rows(), model.dense.weights.cols()],
        model.dense.weights.data(),
    )?;
    write_param_block(&mut w, &[model.dense.bias.len()], &model.dense.bias)?;
    write_param_block(
        &mut w,
        &[model.output.weights.rows(), model.output.weights.cols()],
        model.output.weights.data(),
    )?;
    write_param_block(&mut w, &[model.output.bias.len()], &model.output.bias)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = read_exact::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let input_hw = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
    let n_conv = read_u32(&mut r)? as usize;
    let mut conv_layers = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        conv_layers.push(ConvLayerSpec {
            filters: read_u32(&mut r)? as usize,
            kernel: read_u32(&mut r)? as usize,
            stride: read_u32(&mut r)? as usize,
        });
    }
    let dense_units = read_u32(&mut r)? as usize;
    let num_outputs = read_u32(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let step = read_u64(&mut r)?;
    let rng_state = read_u64(&mut r)?;
    let config = ModelConfig {
        input_hw,
        conv_layers,
        dense_units,
        num_outputs,
        seed,
    };
    let mut model: Model<f32> = Model::build(config)?;
    model.step = step;
    model.rng_state = rng_state;
    for c in &mut model.convs {
        let w = read_param_block(&mut r, &c.weights.shape())?;
        c.weights = Tensor::new(c.weights.shape(), w)?;
        c.bias = read_param_block(&mut r, &[c.bias.len()])?;
    }
    let (dr, dc) = (model.dense.weights.rows(), model.dense.weights.cols());
    model.dense.weights = Matrix::new(dr, dc, read_param_block(&mut r, &[dr, dc])?)?;
    model.dense.bias = read_param_block(&mut r, &[model.dense.bias.len()])?;
    let (or_, oc) = (model.output.weights.rows(), model.output.weights.cols());
    model.output.weights = Matrix::new(or_, oc, read_param_block(&mut r, &[or_, oc])?)?;
    model.output.bias = read_param_block(&mut r, &[model.output.bias.len()])?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(k: usize) -> ModelConfig {
        ModelConfig {
            input_hw: (16, 16),
            conv_layers: vec![
                ConvLayerSpec { filters: 4, kernel: 3, stride: 2 },
                ConvLayerSpec { filters: 4, kernel: 3, stride: 2 },
            ],
            dense_units: 8,
            num_outputs: k,
            seed: 7,
        }
    }

    #[test]
    fn default_config_spatial_trace_and_param_count() {
        let cfg = ModelConfig {
            num_outputs: 4,
            ..ModelConfig::default()
        };
        let trace: Vec<usize> = cfg.spatial_trace().unwrap().iter().map(|&(h, _)| h).collect();
        assert_eq!(trace, vec![64, 32, 16, 8, 4, 2, 1]);
        assert_eq!(cfg.flattened_features().unwrap(), 64);
        // Sum of the layer-by-layer formula:
        // conv: 25·1·32+32 + 2·(25·32·32+32) + 25·32·64+64 + 3·(25·64·64+64)
        // dense: 64·128+128; output: 128·4+4.
        assert_eq!(cfg.param_count().unwrap(), 419_588);
        let model: Model<f32> = Model::build(cfg).unwrap();
        assert_eq!(model.total_params(), 419_588);
    }

    #[test]
    fn deep_stack_clamps_at_one_by_one() {
        // Ceil-halving same-padding never collapses below 1x1, however deep.
        let cfg = ModelConfig {
            input_hw: (4, 4),
            conv_layers: vec![ConvLayerSpec { filters: 2, kernel: 3, stride: 2 }; 6],
            dense_units: 4,
            num_outputs: 2,
            seed: 0,
        };
        cfg.validate().unwrap();
        let trace = cfg.spatial_trace().unwrap();
        assert_eq!(trace[0], (2, 2));
        assert!(trace[1..].iter().all(|&d| d == (1, 1)));
        assert_eq!(cfg.flattened_features().unwrap(), 2);
    }

    #[test]
    fn scalar_logit_scorer_is_allowed() {
        let cfg = ModelConfig { num_outputs: 1, ..tiny_config(1) };
        let model: Model<f32> = Model::build(cfg).unwrap();
        let batch = Tensor::zeros([3, 1, 16, 16]);
        let logits = model.forward(&batch).unwrap();
        assert_eq!((logits.rows(), logits.cols()), (3, 1));
    }

    #[test]
    fn zero_input_gives_finite_deterministic_logits() {
        let model: Model<f32> = Model::build(tiny_config(3)).unwrap();
        let batch = Tensor::zeros([2, 1, 16, 16]);
        let a = model.forward(&batch).unwrap();
        let b = model.forward(&batch).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|x| x.is_finite()));
        // Duplicated rows produce identical logit rows.
        assert_eq!(a.row(0), a.row(1));
    }

    #[test]
    fn pixel_perturbation_moves_logits() {
        let model: Model<f32> = Model::build(tiny_config(3)).unwrap();
        let zero = Tensor::zeros([1, 1, 16, 16]);
        let mut one = Tensor::zeros([1, 1, 16, 16]);
        one.set(0, 0, 8, 8, 1.0);
        let a = model.forward(&zero).unwrap();
        let b = model.forward(&one).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn tiny_model_gradient_check_passes() {
        let mut model: Model<f64> = Model::build(tiny_config(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = Tensor::from_fn([2, 1, 16, 16], |_| rng.gen_range(0.0..1.0));
        let report = model.gradient_check(&batch, &[0, 1], 1e-3).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model: Model<f32> = Model::build(tiny_config(2)).unwrap();
        model.step = 17;
        let batch = Tensor::from_fn([1, 1, 16, 16], |i| ((i * 7) % 2) as f32);
        let before = model.forward(&batch).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step, 17);
        let after = loaded.forward(&batch).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn corrupt_magic_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model: Model<f32> = Model::build(tiny_config(2)).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model: Model<f32> = Model::build(tiny_config(2)).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn lr_zero_training_leaves_parameters_unchanged() {
        use crate::datasets::LabeledText;
        use crate::raster::GlyphFont;
        let font = GlyphFont::default_ascii();
        let layout = crate::raster::LayoutConfig {
            image_width: 16,
            image_height: 24,
            margin: 4,
            ..Default::default()
        };
        let cfg = ModelConfig { input_hw: (24, 16), ..tiny_config(2) };
        let mut model: Model<f32> = Model::build(cfg).unwrap();
        let before = model.convs[0].weights.clone();
        let data = vec![
            LabeledText { label: 0, text: "a".into() },
            LabeledText { label: 1, text: "b".into() },
        ];
        let tc = TrainConfig {
            batch_size: 2,
            epochs: 1,
            learning_rate: 0.0,
            momentum: 0.0,
            augment: None,
            shuffle_seed: 0,
            eval_every: 0,
        };
        train(&mut model, &data, &[], &tc, &font, &layout).unwrap();
        assert_eq!(model.convs[0].weights, before);
    }
}
