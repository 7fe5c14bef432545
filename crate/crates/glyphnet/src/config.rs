//! Run configuration: a flat `section.key = value` text file.
//!
//! Every key is optional and falls back to a documented default; unknown keys
//! are rejected. The echo produced by [`RunConfig::echo`] lists every
//! effective value and is itself a parseable config file.

use std::path::PathBuf;

use crate::augment::AugmentConfig;
use crate::dialog::{DialogLayout, NegativeConfig};
use crate::error::{Error, Result};
use crate::model::{ConvLayerSpec, ModelConfig, TrainConfig};
use crate::raster::{LayoutConfig, Overflow, Polarity, Wrap};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // layout.*
    pub layout: LayoutConfig,
    // augment.*
    pub augment: AugmentConfig,
    pub augment_enabled: bool,
    // model.*
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub dense_units: usize,
    pub num_outputs: usize,
    pub model_seed: u64,
    // train.*
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub shuffle_seed: u64,
    pub eval_every: usize,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
    pub record_seconds: bool,
    // dialog.*
    pub dialog_width: usize,
    pub dialog_height: usize,
    pub candidate_rows: usize,
    pub negatives_per_gold: usize,
    pub hard_negatives: usize,
    pub charflip_negatives: usize,
    pub dialog_seed: u64,
    // paths.*
    pub font_path: Option<PathBuf>,
    pub data_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dl = DialogLayout::default();
        let tc = TrainConfig::default();
        RunConfig {
            layout: LayoutConfig::default(),
            augment: AugmentConfig::default(),
            augment_enabled: true,
            conv_filters: vec![32, 32, 32, 64, 64, 64, 64],
            kernel: 5,
            stride: 2,
            dense_units: 128,
            num_outputs: 2,
            model_seed: 42,
            batch_size: tc.batch_size,
            epochs: tc.epochs,
            learning_rate: tc.learning_rate,
            momentum: tc.momentum,
            shuffle_seed: tc.shuffle_seed,
            eval_every: 0,
            split: (0.8, 0.1, 0.1),
            split_seed: 7,
            record_seconds: true,
            dialog_width: dl.page.image_width,
            dialog_height: dl.page.image_height,
            candidate_rows: dl.candidate_rows,
            negatives_per_gold: 3,
            hard_negatives: 2,
            charflip_negatives: 2,
            dialog_seed: 0,
            font_path: None,
            data_path: None,
            out_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Parse config text over the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `section.key = value`", idx + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        if self.conv_filters.is_empty() {
            return Err(Error::Config("model.conv_filters must not be empty".into()));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("model.kernel and model.stride must be >= 1".into()));
        }
        let sum = self.split.0 + self.split.1 + self.split.2;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("train.split must sum to 1, got {sum}")));
        }
        Ok(())
    }

    /// Apply a single `section.key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "layout.width" => self.layout.image_width = parse_num(key, value)?,
            "layout.height" => self.layout.image_height = parse_num(key, value)?,
            "layout.margin" => self.layout.margin = parse_num(key, value)?,
            "layout.line_spacing" => self.layout.line_spacing = parse_num(key, value)?,
            "layout.wrap" => {
                self.layout.wrap = match value {
                    "word" => Wrap::Word,
                    "char" => Wrap::Char,
                    _ => return Err(Error::Config(format!("{key}: unknown wrap mode {value:?}"))),
                }
            }
            "layout.overflow" => {
                self.layout.overflow = match value {
                    "truncate" => Overflow::Truncate,
                    "error" => Overflow::Error,
                    _ => return Err(Error::Config(format!("{key}: unknown overflow mode {value:?}"))),
                }
            }
            "layout.polarity" => {
                self.layout.polarity = match value {
                    "dark_on_light" => Polarity::DarkOnLight,
                    "light_on_dark" => Polarity::LightOnDark,
                    _ => return Err(Error::Config(format!("{key}: unknown polarity {value:?}"))),
                }
            }
            "layout.threshold" => self.layout.binarize_threshold = parse_num(key, value)?,
            "augment.enabled" => self.augment_enabled = parse_bool(key, value)?,
            "augment.width_shift" => self.augment.width_shift_frac = parse_num(key, value)?,
            "augment.height_shift" => self.augment.height_shift_frac = parse_num(key, value)?,
            "augment.max_rotation" => self.augment.max_rotation_deg = parse_num(key, value)?,
            "augment.hflip_prob" => self.augment.hflip_prob = parse_num(key, value)?,
            "augment.charflip_prob" => self.augment.charflip_prob = parse_num(key, value)?,
            "augment.seed" => self.augment.rng_seed = parse_num(key, value)?,
            "model.conv_filters" => {
                self.conv_filters = value
                    .split(',')
                    .map(|t| parse_num(key, t.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "model.kernel" => self.kernel = parse_num(key, value)?,
            "model.stride" => self.stride = parse_num(key, value)?,
            "model.dense_units" => self.dense_units = parse_num(key, value)?,
            "model.num_outputs" => self.num_outputs = parse_num(key, value)?,
            "model.seed" => self.model_seed = parse_num(key, value)?,
            "train.batch_size" => self.batch_size = parse_num(key, value)?,
            "train.epochs" => self.epochs = parse_num(key, value)?,
            "train.learning_rate" => self.learning_rate = parse_num(key, value)?,
            "train.momentum" => self.momentum = parse_num(key, value)?,
            "train.shuffle_seed" => self.shuffle_seed = parse_num(key, value)?,
            "train.eval_every" => self.eval_every = parse_num(key, value)?,
            "train.split" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!("{key}: expected three fractions")));
                }
                self.split = (
                    parse_num(key, parts[0])?,
                    parse_num(key, parts[1])?,
                    parse_num(key, parts[2])?,
                );
            }
            "train.split_seed" => self.split_seed = parse_num(key, value)?,
            "train.record_seconds" => self.record_seconds = parse_bool(key, value)?,
            "dialog.width" => self.dialog_width = parse_num(key, value)?,
            "dialog.height" => self.dialog_height = parse_num(key, value)?,
            "dialog.candidate_rows" => self.candidate_rows = parse_num(key, value)?,
            "dialog.negatives_per_gold" => self.negatives_per_gold = parse_num(key, value)?,
            "dialog.hard_negatives" => self.hard_negatives = parse_num(key, value)?,
            "dialog.charflip_negatives" => self.charflip_negatives = parse_num(key, value)?,
            "dialog.seed" => self.dialog_seed = parse_num(key, value)?,
            "paths.font" => self.font_path = Some(PathBuf::from(value)),
            "paths.data" => self.data_path = Some(PathBuf::from(value)),
            "paths.out_dir" => self.out_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Effective configuration as config-file text (all keys, defaults
    /// filled in).
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("layout.width", self.layout.image_width.to_string());
        kv("layout.height", self.layout.image_height.to_string());
        kv("layout.margin", self.layout.margin.to_string());
        kv("layout.line_spacing", self.layout.line_spacing.to_string());
        kv(
            "layout.wrap",
            match self.layout.wrap {
                Wrap::Word => "word",
                Wrap::Char => "char",
            }
            .into(),
        );
        kv(
            "layout.overflow",
            match self.layout.overflow {
                Overflow::Truncate => "truncate",
                Overflow::Error => "error",
            }
            .into(),
        );
        kv(
            "layout.polarity",
            match self.layout.polarity {
                Polarity::DarkOnLight => "dark_on_light",
                Polarity::LightOnDark => "light_on_dark",
            }
            .into(),
        );
        kv("layout.threshold", self.layout.binarize_threshold.to_string());
        kv("augment.enabled", self.augment_enabled.to_string());
        kv("augment.width_shift", self.augment.width_shift_frac.to_string());
        kv("augment.height_shift", self.augment.height_shift_frac.to_string());
        kv("augment.max_rotation", self.augment.max_rotation_deg.to_string());
        kv("augment.hflip_prob", self.augment.hflip_prob.to_string());
        kv("augment.charflip_prob", self.augment.charflip_prob.to_string());
        kv("augment.seed", self.augment.rng_seed.to_string());
        kv(
            "model.conv_filters",
            self.conv_filters
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("model.kernel", self.kernel.to_string());
        kv("model.stride", self.stride.to_string());
        kv("model.dense_units", self.dense_units.to_string());
        kv("model.num_outputs", self.num_outputs.to_string());
        kv("model.seed", self.model_seed.to_string());
        kv("train.batch_size", self.batch_size.to_string());
        kv("train.epochs", self.epochs.to_string());
        kv("train.learning_rate", self.learning_rate.to_string());
        kv("train.momentum", self.momentum.to_string());
        kv("train.shuffle_seed", self.shuffle_seed.to_string());
        kv("train.eval_every", self.eval_every.to_string());
        kv(
            "train.split",
            format!("{},{},{}", self.split.0, self.split.1, self.split.2),
        );
        kv("train.split_seed", self.split_seed.to_string());
        kv("train.record_seconds", self.record_seconds.to_string());
        kv("dialog.width", self.dialog_width.to_string());
        kv("dialog.height", self.dialog_height.to_string());
        kv("dialog.candidate_rows", self.candidate_rows.to_string());
        kv("dialog.negatives_per_gold", self.negatives_per_gold.to_string());
        kv("dialog.hard_negatives", self.hard_negatives.to_string());
        kv("dialog.charflip_negatives", self.charflip_negatives.to_string());
        kv("dialog.seed", self.dialog_seed.to_string());
        if let Some(p) = &self.font_path {
            kv("paths.font", p.display().to_string());
        }
        if let Some(p) = &self.data_path {
            kv("paths.data", p.display().to_string());
        }
        if let Some(p) = &self.out_dir {
            kv("paths.out_dir", p.display().to_string());
        }
        s
    }

    /// Model description for the classification input page.
    pub fn model_config(&self, input_hw: (usize, usize), num_outputs: usize) -> ModelConfig {
        ModelConfig {
            input_hw,
            conv_layers: self
                .conv_filters
                .iter()
                .map(|&filters| ConvLayerSpec {
                    filters,
                    kernel: self.kernel,
                    stride: self.stride,
                })
                .collect(),
            dense_units: self.dense_units,
            num_outputs,
            seed: self.model_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            augment: if self.augment_enabled {
                Some(self.augment.clone())
            } else {
                None
            },
            shuffle_seed: self.shuffle_seed,
            eval_every: self.eval_every,
        }
    }

    pub fn dialog_layout(&self) -> DialogLayout {
        DialogLayout {
            page: LayoutConfig {
                image_width: self.dialog_width,
                image_height: self.dialog_height,
                ..self.layout.clone()
            },
            candidate_rows: self.candidate_rows,
        }
    }

    pub fn negative_config(&self) -> NegativeConfig {
        NegativeConfig {
            negatives_per_gold: self.negatives_per_gold,
            hard_extras: self.hard_negatives,
            charflip_extras: self.charflip_negatives,
            seed: self.dialog_seed,
        }
    }
}
