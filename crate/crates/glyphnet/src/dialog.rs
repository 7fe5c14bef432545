//! Dialog next-response selection: render (history, candidate) pairs onto one
//! page and rank the candidate pool with a binary match scorer.
//!
//! The page has a fixed split: history rows on top, a full-width separator
//! row of dashes, and a reserved candidate region at the bottom. The
//! candidate always starts at the same text row, so its pixels occupy a fixed
//! page region regardless of history length.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{char_flip, AugmentConfig};
use crate::datasets::{CandidateSet, Dialogue, Speaker};
use crate::error::{Error, Result};
use crate::model::{stack_batch, EpochReport, Model, TrainConfig};
use crate::nn::{softmax_cross_entropy, Optimizer, OptimizerAlgo};
use crate::raster::{
    blit_lines, image_to_tensor, layout_lines, GlyphFont, LayoutConfig, PageImage,
};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor};

/// Page geometry for dialog pairs.
#[derive(Debug, Clone)]
pub struct DialogLayout {
    pub page: LayoutConfig,
    /// Text rows reserved at the bottom of the page for the candidate.
    pub candidate_rows: usize,
}

impl Default for DialogLayout {
    fn default() -> Self {
        DialogLayout {
            page: LayoutConfig {
                image_width: 160,
                image_height: 176,
                ..LayoutConfig::default()
            },
            candidate_rows: 3,
        }
    }
}

impl DialogLayout {
    pub fn validate(&self, font: &GlyphFont) -> Result<()> {
        self.page.validate(font)?;
        if self.candidate_rows == 0 {
            return Err(Error::Layout("candidate region needs at least 1 row".into()));
        }
        let rows = self.page.rows(font);
        // History + separator + candidate must fit.
        if rows < self.candidate_rows + 2 {
            return Err(Error::Layout(format!(
                "page fits {rows} rows; need {} for the candidate region plus \
                 separator and at least one history row",
                self.candidate_rows
            )));
        }
        Ok(())
    }

    pub fn history_rows(&self, font: &GlyphFont) -> usize {
        self.page.rows(font) - self.candidate_rows - 1
    }
}

/// One (context, candidate) training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringInstance {
    /// History lines, oldest first: KB facts verbatim, utterances prefixed
    /// `U: ` / `S: `.
    pub context: Vec<String>,
    pub candidate: String,
    /// 1 = gold response, 0 = negative.
    pub label: usize,
}

/// (context lines, gold response) for every system turn of a dialog.
pub fn turn_contexts(dialog: &Dialogue) -> Vec<(Vec<String>, String)> {
    let mut lines: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for turn in &dialog.turns {
        for fact in &turn.kb_facts {
            lines.push(fact.clone());
        }
        match turn.speaker {
            Speaker::User => lines.push(format!("U: {}", turn.utterance)),
            Speaker::System => {
                out.push((lines.clone(), turn.utterance.clone()));
                lines.push(format!("S: {}", turn.utterance));
            }
        }
    }
    out
}

/// Render history and candidate onto one page. History that exceeds its
/// region is truncated oldest-first; a candidate that does not fit its
/// reserved region is an error.
pub fn render_pair(
    context: &[String],
    candidate: &str,
    font: &GlyphFont,
    layout: &DialogLayout,
) -> Result<PageImage> {
    layout.validate(font)?;
    let cols = layout.page.columns(font);
    let history_rows = layout.history_rows(font);

    let cand_lines = layout_lines(candidate, cols, layout.page.wrap);
    if cand_lines.len() > layout.candidate_rows {
        return Err(Error::Layout(format!(
            "candidate {candidate:?} needs {} rows but the region has {}",
            cand_lines.len(),
            layout.candidate_rows
        )));
    }

    let mut history: Vec<String> = Vec::new();
    for line in context {
        history.extend(layout_lines(line, cols, layout.page.wrap));
    }
    if history.len() > history_rows {
        history.drain(0..history.len() - history_rows);
    }

    let mut image = PageImage::filled(
        layout.page.image_width,
        layout.page.image_height,
        layout.page.background_value(),
    );
    let row_stride = font.cell_height + layout.page.line_spacing;
    let y0 = layout.page.margin;
    blit_lines(&mut image, font, &layout.page, &history, y0);
    let separator = vec!["-".repeat(cols)];
    blit_lines(
        &mut image,
        font,
        &layout.page,
        &separator,
        y0 + history_rows * row_stride,
    );
    blit_lines(
        &mut image,
        font,
        &layout.page,
        &cand_lines,
        y0 + (history_rows + 1) * row_stride,
    );
    Ok(image)
}

/// Classic dynamic-programming edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// How negatives are drawn for each gold response.
#[derive(Debug, Clone)]
pub struct NegativeConfig {
    /// Uniformly sampled negatives per gold; these give the scorer coverage
    /// of the whole candidate set.
    pub negatives_per_gold: usize,
    /// Hard negatives per gold: the candidates closest to the gold by edit
    /// distance, added on top of the uniform ones.
    pub hard_extras: usize,
    /// Extra negatives made by digit-flipping the gold response.
    pub charflip_extras: usize,
    pub seed: u64,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            negatives_per_gold: 3,
            hard_extras: 2,
            charflip_extras: 2,
            seed: 0,
        }
    }
}

/// Expand dialogs into labeled (context, candidate) pairs: one positive per
/// system turn plus sampled negatives.
pub fn build_instances(
    dialogs: &[Dialogue],
    candidates: &CandidateSet,
    cfg: &NegativeConfig,
) -> Result<Vec<ScoringInstance>> {
    if candidates.len() < 2 {
        return Err(Error::InvalidArg(
            "need at least 2 candidates to sample negatives".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flip_cfg = AugmentConfig {
        charflip_prob: 1.0,
        ..AugmentConfig::disabled()
    };
    let mut out = Vec::new();
    for dialog in dialogs {
        for (context, gold) in turn_contexts(dialog) {
            out.push(ScoringInstance {
                context: context.clone(),
                candidate: gold.clone(),
                label: 1,
            });
            let pool: Vec<&str> = candidates.iter().filter(|c| *c != gold).collect();
            let k = cfg.negatives_per_gold.min(pool.len());
            let mut negatives: Vec<&str> =
                pool.choose_multiple(&mut rng, k).copied().collect();
            if cfg.hard_extras > 0 {
                let mut by_distance: Vec<&str> = pool.clone();
                by_distance.sort_by_key(|c| (levenshtein(c, &gold), c.to_string()));
                for &near in by_distance.iter() {
                    if negatives.len() >= k + cfg.hard_extras.min(pool.len().saturating_sub(k)) {
                        break;
                    }
                    if !negatives.contains(&near) {
                        negatives.push(near);
                    }
                }
            }
            for neg in negatives {
                out.push(ScoringInstance {
                    context: context.clone(),
                    candidate: neg.to_string(),
                    label: 0,
                });
            }
            for _ in 0..cfg.charflip_extras {
                let flipped = char_flip(&gold, &flip_cfg, &mut rng)?;
                if flipped != gold {
                    out.push(ScoringInstance {
                        context: context.clone(),
                        candidate: flipped,
                        label: 0,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_scorer<S: Scalar>(model: &Model<S>) -> Result<()> {
    if model.config.num_outputs != 1 {
        return Err(Error::InvalidArg(format!(
            "dialog scorer needs num_outputs = 1, checkpoint has {}",
            model.config.num_outputs
        )));
    }
    Ok(())
}

fn render_instance_tensor<S: Scalar>(
    context: &[String],
    candidate: &str,
    font: &GlyphFont,
    layout: &DialogLayout,
) -> Result<Tensor<S>> {
    Ok(image_to_tensor(&render_pair(context, candidate, font, layout)?))
}

/// Match scores (sigmoid of the scalar logit) for a batch of pages.
pub fn score_batch<S: Scalar>(model: &Model<S>, batch: &Tensor<S>) -> Result<Vec<f64>> {
    check_scorer(model)?;
    let logits = model.forward(batch)?;
    Ok(logits.data().iter().map(|z| sigmoid(z.to_acc())).collect())
}

/// Score every candidate against one context, best first. Ties break
/// lexicographically on the candidate text.
pub fn score_candidates<S: Scalar>(
    model: &Model<S>,
    context: &[String],
    candidates: &CandidateSet,
    font: &GlyphFont,
    layout: &DialogLayout,
) -> Result<Vec<(String, f64)>> {
    check_scorer(model)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for chunk in candidates.as_slice().chunks(64) {
        let rendered: Vec<Result<Tensor<S>>> = chunk
            .par_iter()
            .map(|c| render_instance_tensor(context, c, font, layout))
            .collect();
        let mut tensors = Vec::with_capacity(chunk.len());
        for r in rendered {
            tensors.push(r?);
        }
        let scores = score_batch(model, &stack_batch(&tensors)?)?;
        for (c, s) in chunk.iter().zip(scores) {
            scored.push((c.clone(), s));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}

/// Rank candidates for one context with an arbitrary scoring function,
/// best first, ties broken lexicographically.
pub fn rank_with<F>(
    score: &mut F,
    context: &[String],
    candidates: &CandidateSet,
) -> Result<Vec<(String, f64)>>
where
    F: FnMut(&[String], &str) -> Result<f64>,
{
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates.iter() {
        scored.push((c.to_string(), score(context, c)?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}

/// [`evaluate_dialogs`] over an arbitrary scoring function instead of a
/// model; used to verify the metric arithmetic against known scorers.
pub fn evaluate_dialogs_with<F>(
    mut score: F,
    dialogs: &[Dialogue],
    candidates: &CandidateSet,
) -> Result<DialogEvalReport>
where
    F: FnMut(&[String], &str) -> Result<f64>,
{
    if dialogs.is_empty() {
        return Err(Error::InvalidArg("no dialogs to evaluate".into()));
    }
    let mut responses = 0usize;
    let mut correct = 0usize;
    let mut dialogs_correct = 0usize;
    for dialog in dialogs {
        let mut all_right = true;
        for (context, gold) in turn_contexts(dialog) {
            let ranked = rank_with(&mut score, &context, candidates)?;
            responses += 1;
            if ranked[0].0 == gold {
                correct += 1;
            } else {
                all_right = false;
            }
        }
        if all_right {
            dialogs_correct += 1;
        }
    }
    Ok(DialogEvalReport {
        per_response_accuracy: correct as f64 / responses as f64,
        per_dialog_accuracy: dialogs_correct as f64 / dialogs.len() as f64,
        num_responses: responses,
        num_dialogs: dialogs.len(),
    })
}

#[derive(Debug, Clone)]
pub struct DialogEvalReport {
    pub per_response_accuracy: f64,
    pub per_dialog_accuracy: f64,
    pub num_responses: usize,
    pub num_dialogs: usize,
}

/// Rank the full candidate set at every system turn; a dialog counts as
/// correct only if every one of its responses ranks first.
pub fn evaluate_dialogs<S: Scalar>(
    model: &Model<S>,
    dialogs: &[Dialogue],
    candidates: &CandidateSet,
    font: &GlyphFont,
    layout: &DialogLayout,
) -> Result<DialogEvalReport> {
    check_scorer(model)?;
    if dialogs.is_empty() {
        return Err(Error::InvalidArg("no dialogs to evaluate".into()));
    }
    let mut responses = 0usize;
    let mut correct = 0usize;
    let mut dialogs_correct = 0usize;
    for dialog in dialogs {
        let mut all_right = true;
        for (context, gold) in turn_contexts(dialog) {
            let ranked = score_candidates(model, &context, candidates, font, layout)?;
            responses += 1;
            if ranked[0].0 == gold {
                correct += 1;
            } else {
                all_right = false;
            }
        }
        if all_right {
            dialogs_correct += 1;
        }
    }
    Ok(DialogEvalReport {
        per_response_accuracy: correct as f64 / responses as f64,
        per_dialog_accuracy: dialogs_correct as f64 / dialogs.len() as f64,
        num_responses: responses,
        num_dialogs: dialogs.len(),
    })
}

/// One optimizer step of logistic loss on a scalar-logit scorer. The logit z
/// is treated as the second column of a two-class softmax against a fixed 0,
/// which is exactly sigmoid cross-entropy.
pub fn scorer_train_step<S: Scalar>(
    model: &mut Model<S>,
    batch: &Tensor<S>,
    labels: &[usize],
    optimizer: &mut Optimizer<S>,
) -> Result<S> {
    check_scorer(model)?;
    let (logits, cache) = model.forward_cached(batch)?;
    let n = logits.rows();
    let mut two_col = Matrix::zeros(n, 2);
    for i in 0..n {
        two_col.set(i, 1, logits.at(i, 0));
    }
    let (loss, dtwo) = softmax_cross_entropy(&two_col, labels)?;
    let mut dlogits = Matrix::zeros(n, 1);
    for i in 0..n {
        dlogits.set(i, 0, dtwo.at(i, 1));
    }
    let grads = model.backward(&cache, &dlogits)?;
    let grad_slices = grads.slices();
    let mut params = model.param_slices_mut();
    optimizer.step(&mut params, &grad_slices)?;
    model.step += 1;
    Ok(loss)
}

/// Train the scorer on pre-built instances (rendered on the fly).
pub fn train_scorer<S: Scalar>(
    model: &mut Model<S>,
    instances: &[ScoringInstance],
    cfg: &TrainConfig,
    font: &GlyphFont,
    layout: &DialogLayout,
) -> Result<Vec<EpochReport>> {
    check_scorer(model)?;
    if instances.is_empty() {
        return Err(Error::InvalidArg("no training instances".into()));
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
    let mut recent: Vec<f64> = Vec::new();
    for epoch in 0..cfg.epochs {
        let start = std::time::Instant::now();
        let mut order: Vec<usize> = (0..instances.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            cfg.shuffle_seed.wrapping_add(epoch as u64),
        ));
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let rendered: Vec<Result<Tensor<S>>> = chunk
                .par_iter()
                .map(|&i| {
                    render_instance_tensor(
                        &instances[i].context,
                        &instances[i].candidate,
                        font,
                        layout,
                    )
                })
                .collect();
            let mut tensors = Vec::with_capacity(chunk.len());
            for r in rendered {
                tensors.push(r?);
            }
            let batch = stack_batch(&tensors)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| instances[i].label).collect();
            // A NonFinite forward error means the weights exploded: divergence.
            let loss = match scorer_train_step(model, &batch, &labels, &mut optimizer) {
                Ok(l) => l.to_acc(),
                Err(Error::NonFinite { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: model.step as usize,
                    loss,
                    lr: cfg.learning_rate,
                    history: recent.clone(),
                });
            }
            recent.push(loss);
            if recent.len() > 5 {
                recent.remove(0);
            }
            loss_sum += loss;
            batches += 1;
        }
        history.push(EpochReport {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_accuracy: f64::NAN,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}
