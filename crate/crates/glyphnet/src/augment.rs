//! Training-time augmentation: geometric image transforms plus text-level
//! character flipping. Everything is driven by an explicit RNG so a given
//! (sample, seed) pair always produces the same augmented image.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{binarize, render_text, GlyphFont, LayoutConfig, PageImage};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub width_shift_frac: f64,
    pub height_shift_frac: f64,
    pub max_rotation_deg: f64,
    pub hflip_prob: f64,
    pub charflip_prob: f64,
    /// Character sets eligible for intra-set substitution.
    pub charflip_classes: Vec<Vec<char>>,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            width_shift_frac: 0.2,
            height_shift_frac: 0.2,
            max_rotation_deg: 15.0,
            hflip_prob: 0.5,
            charflip_prob: 0.0,
            charflip_classes: vec![digits()],
            rng_seed: 0,
        }
    }
}

pub fn digits() -> Vec<char> {
    ('0'..='9').collect()
}

impl AugmentConfig {
    /// Config with every knob at zero; `augment_sample` then reduces to a
    /// plain render.
    pub fn disabled() -> Self {
        AugmentConfig {
            width_shift_frac: 0.0,
            height_shift_frac: 0.0,
            max_rotation_deg: 0.0,
            hflip_prob: 0.0,
            charflip_prob: 0.0,
            charflip_classes: vec![digits()],
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !frac_ok(self.width_shift_frac) || !frac_ok(self.height_shift_frac) {
            return Err(Error::InvalidArg("shift fractions must be in [0,1)".into()));
        }
        if !(0.0..90.0).contains(&self.max_rotation_deg) {
            return Err(Error::InvalidArg("rotation must be in [0,90) degrees".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) || !(0.0..=1.0).contains(&self.charflip_prob) {
            return Err(Error::InvalidArg("probabilities must be in [0,1]".into()));
        }
        for class in &self.charflip_classes {
            if class.len() < 2 {
                return Err(Error::InvalidArg(
                    "charflip classes need at least 2 members".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.width_shift_frac == 0.0
            && self.height_shift_frac == 0.0
            && self.max_rotation_deg == 0.0
            && self.hflip_prob == 0.0
            && self.charflip_prob == 0.0
    }

    /// RNG for one sample, derived from the master seed. Independent of
    /// worker scheduling, so parallel loaders reproduce the serial stream.
    pub fn sample_rng(&self, epoch: u64, sample_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.rng_seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ sample_index,
        );
        rng.set_stream(epoch);
        rng
    }
}

/// Translate by (dx, dy); vacated pixels take the background value, content
/// shifted past the border is dropped.
pub fn shift_image(image: &PageImage, dx: i64, dy: i64, background: f32) -> Result<PageImage> {
    let (w, h) = (image.width as i64, image.height as i64);
    if dx.abs() > w || dy.abs() > h {
        return Err(Error::InvalidArg(format!(
            "shift ({dx},{dy}) exceeds image dimensions {w}x{h}"
        )));
    }
    let mut out = PageImage::filled(image.width, image.height, background);
    for y in 0..h {
        let sy = y - dy;
        if sy < 0 || sy >= h {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if sx >= 0 && sx < w {
                out.set(x as usize, y as usize, image.at(sx as usize, sy as usize));
            }
        }
    }
    Ok(out)
}

/// Rotate about the image center with nearest-neighbor sampling; binary
/// inputs stay binary.
pub fn rotate_image(image: &PageImage, angle_deg: f64, background: f32) -> Result<PageImage> {
    if angle_deg.abs() > 90.0 {
        return Err(Error::InvalidArg(format!(
            "rotation angle {angle_deg} outside [-90, 90]"
        )));
    }
    if angle_deg == 0.0 {
        return Ok(image.clone());
    }
    let (w, h) = (image.width, image.height);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let rad = angle_deg.to_radians();
    let (sin, cos) = rad.sin_cos();
    let mut out = PageImage::filled(w, h, background);
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate the destination point by -angle.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = (cos * dx + sin * dy + cx).round();
            let sy = (-sin * dx + cos * dy + cy).round();
            if sx >= 0.0 && sx < w as f64 && sy >= 0.0 && sy < h as f64 {
                out.set(x, y, image.at(sx as usize, sy as usize));
            }
        }
    }
    Ok(out)
}

/// Reverse column order.
pub fn hflip_image(image: &PageImage) -> PageImage {
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            out.set(x, y, image.at(image.width - 1 - x, y));
        }
    }
    out
}

/// Replace each in-class character, with probability `charflip_prob`, by a
/// uniformly chosen *different* member of its class.
pub fn char_flip(text: &str, config: &AugmentConfig, rng: &mut impl Rng) -> Result<String> {
    config.validate()?;
    if config.charflip_prob == 0.0 {
        return Ok(text.to_string());
    }
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        let class = config.charflip_classes.iter().find(|cl| cl.contains(&c));
        match class {
            Some(cl) if rng.gen::<f64>() < config.charflip_prob => {
                let others: Vec<char> = cl.iter().copied().filter(|&o| o != c).collect();
                out.push(others[rng.gen_range(0..others.len())]);
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Full training pipeline: char_flip -> render -> shift -> rotate -> hflip ->
/// re-binarize.
pub fn augment_sample(
    text: &str,
    font: &GlyphFont,
    layout: &LayoutConfig,
    config: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<PageImage> {
    config.validate()?;
    let text = char_flip(text, config, rng)?;
    let mut image = render_text(&text, font, layout)?;
    let bg = layout.background_value();

    let max_dx = (config.width_shift_frac * image.width as f64).floor() as i64;
    let max_dy = (config.height_shift_frac * image.height as f64).floor() as i64;
    let dx = if max_dx > 0 { rng.gen_range(-max_dx..=max_dx) } else { 0 };
    let dy = if max_dy > 0 { rng.gen_range(-max_dy..=max_dy) } else { 0 };
    if dx != 0 || dy != 0 {
        image = shift_image(&image, dx, dy, bg)?;
    }

    if config.max_rotation_deg > 0.0 {
        let angle = rng.gen_range(-config.max_rotation_deg..=config.max_rotation_deg);
        image = rotate_image(&image, angle, bg)?;
    }

    if config.hflip_prob > 0.0 && rng.gen::<f64>() < config.hflip_prob {
        image = hflip_image(&image);
    }

    binarize(&image, layout.binarize_threshold as f32)
}
