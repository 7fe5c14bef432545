//! Text rasterization: strings in, binarized page images out.

pub mod font;
pub mod pgm;

pub use font::{load_font, parse_font, GlyphFont};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrap {
    Word,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overflow {
    Truncate,
    Error,
}

/// Visual polarity. In tensor space ink is always the distinguishing value:
/// dark-on-light stores ink as 1.0 on a 0.0 background, light-on-dark the
/// reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    DarkOnLight,
    LightOnDark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub margin: usize,
    pub line_spacing: usize,
    pub wrap: Wrap,
    pub overflow: Overflow,
    pub polarity: Polarity,
    pub binarize_threshold: f32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            image_width: 128,
            image_height: 128,
            margin: 4,
            line_spacing: 0,
            wrap: Wrap::Word,
            overflow: Overflow::Truncate,
            polarity: Polarity::DarkOnLight,
            binarize_threshold: 0.5,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self, font: &GlyphFont) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Layout("image dimensions must be positive".into()));
        }
        if 2 * self.margin + font.cell_height > self.image_height
            || 2 * self.margin + font.cell_width > self.image_width
        {
            return Err(Error::Layout(format!(
                "page {}x{} with margin {} cannot fit a {}x{} glyph cell",
                self.image_width, self.image_height, self.margin, font.cell_width, font.cell_height
            )));
        }
        if !(0.0 < self.binarize_threshold && self.binarize_threshold < 1.0) {
            return Err(Error::Layout(format!(
                "binarize threshold must be in (0,1), got {}",
                self.binarize_threshold
            )));
        }
        Ok(())
    }

    /// Character columns available per text row.
    pub fn columns(&self, font: &GlyphFont) -> usize {
        (self.image_width - 2 * self.margin) / font.cell_width
    }

    /// Text rows that fit on the page.
    pub fn rows(&self, font: &GlyphFont) -> usize {
        let usable = self.image_height - 2 * self.margin;
        (usable + self.line_spacing) / (font.cell_height + self.line_spacing)
    }

    pub fn ink_value(&self) -> f32 {
        match self.polarity {
            Polarity::DarkOnLight => 1.0,
            Polarity::LightOnDark => 0.0,
        }
    }

    pub fn background_value(&self) -> f32 {
        1.0 - self.ink_value()
    }
}

/// Grayscale page; after binarization every pixel is exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct PageImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl PageImage {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        PageImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

/// Normalize control characters: tabs become 4 spaces, `\r` is dropped.
fn normalize(text: &str) -> String {
    text.replace('\t', "    ").replace('\r', "")
}

/// Break one logical line into physical lines of at most `cols` characters.
pub(crate) fn wrap_line(line: &str, cols: usize, wrap: Wrap) -> Vec<String> {
    let mut out = Vec::new();
    match wrap {
        Wrap::Char => {
            let chars: Vec<char> = line.chars().collect();
            if chars.is_empty() {
                out.push(String::new());
            }
            for chunk in chars.chunks(cols) {
                out.push(chunk.iter().collect());
            }
        }
        Wrap::Word => {
            let mut cur = String::new();
            for word in line.split(' ') {
                let wlen = word.chars().count();
                let cur_len = cur.chars().count();
                if cur_len == 0 {
                    if wlen <= cols {
                        cur.push_str(word);
                    } else {
                        // Word longer than a line: char-wrap it.
                        let chars: Vec<char> = word.chars().collect();
                        for chunk in chars.chunks(cols) {
                            if !cur.is_empty() {
                                out.push(std::mem::take(&mut cur));
                            }
                            cur = chunk.iter().collect();
                        }
                    }
                } else if cur_len + 1 + wlen <= cols {
                    cur.push(' ');
                    cur.push_str(word);
                } else {
                    out.push(std::mem::take(&mut cur));
                    if wlen <= cols {
                        cur.push_str(word);
                    } else {
                        let chars: Vec<char> = word.chars().collect();
                        for chunk in chars.chunks(cols) {
                            if !cur.is_empty() {
                                out.push(std::mem::take(&mut cur));
                            }
                            cur = chunk.iter().collect();
                        }
                    }
                }
            }
            out.push(cur);
        }
    }
    out
}

/// Lay out a text into physical lines for a page `cols` characters wide.
pub(crate) fn layout_lines(text: &str, cols: usize, wrap: Wrap) -> Vec<String> {
    let text = normalize(text);
    let mut lines = Vec::new();
    for logical in text.split('\n') {
        lines.extend(wrap_line(logical, cols, wrap));
    }
    // A trailing empty physical line renders nothing; keep layout minimal.
    while lines.last().map(|l| l.is_empty()).unwrap_or(false) && lines.len() > 1 {
        lines.pop();
    }
    if lines == [String::new()] {
        lines.clear();
    }
    lines
}

/// Stamp one glyph at pixel position (x, y).
pub(crate) fn blit_glyph(image: &mut PageImage, font: &GlyphFont, c: char, x: usize, y: usize, ink: f32) {
    let mask = font.glyph(c);
    for gy in 0..font.cell_height {
        for gx in 0..font.cell_width {
            if mask[gy * font.cell_width + gx] {
                image.set(x + gx, y + gy, ink);
            }
        }
    }
}

/// Render laid-out lines starting at a pixel row, clipped to `max_rows`.
pub(crate) fn blit_lines(
    image: &mut PageImage,
    font: &GlyphFont,
    layout: &LayoutConfig,
    lines: &[String],
    y0: usize,
) {
    let ink = layout.ink_value();
    let row_stride = font.cell_height + layout.line_spacing;
    for (row, line) in lines.iter().enumerate() {
        let y = y0 + row * row_stride;
        for (col, c) in line.chars().enumerate() {
            let x = layout.margin + col * font.cell_width;
            blit_glyph(image, font, c, x, y, ink);
        }
    }
}

/// Deterministically render a string onto a fresh page.
pub fn render_text(text: &str, font: &GlyphFont, layout: &LayoutConfig) -> Result<PageImage> {
    layout.validate(font)?;
    let cols = layout.columns(font);
    let rows = layout.rows(font);
    let mut lines = layout_lines(text, cols, layout.wrap);
    if lines.len() > rows {
        match layout.overflow {
            Overflow::Truncate => lines.truncate(rows),
            Overflow::Error => {
                return Err(Error::Layout(format!(
                    "text needs {} rows but the page fits {}",
                    lines.len(),
                    rows
                )))
            }
        }
    }
    let mut image = PageImage::filled(
        layout.image_width,
        layout.image_height,
        layout.background_value(),
    );
    blit_lines(&mut image, font, layout, &lines, layout.margin);
    Ok(image)
}

/// Threshold a grayscale page to {0,1}. Inclusive at the threshold.
pub fn binarize(image: &PageImage, threshold: f32) -> Result<PageImage> {
    if !(0.0 < threshold && threshold < 1.0) {
        return Err(Error::InvalidArg(format!(
            "binarize threshold must be in (0,1), got {threshold}"
        )));
    }
    Ok(PageImage {
        width: image.width,
        height: image.height,
        pixels: image
            .pixels
            .iter()
            .map(|&p| if p >= threshold { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// Copy a binarized page into a (1, 1, H, W) tensor.
pub fn image_to_tensor<S: Scalar>(image: &PageImage) -> Tensor<S> {
    Tensor::new(
        [1, 1, image.height, image.width],
        image.pixels.iter().map(|&p| S::from_acc(p as f64)).collect(),
    )
    .expect("page pixels are finite")
}

/// Inverse of [`image_to_tensor`] for a single-sample, single-channel tensor.
pub fn tensor_to_image<S: Scalar>(tensor: &Tensor<S>) -> PageImage {
    assert_eq!(tensor.batch(), 1);
    assert_eq!(tensor.channels(), 1);
    PageImage {
        width: tensor.width(),
        height: tensor.height(),
        pixels: tensor.data().iter().map(|x| x.to_acc() as f32).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layout() -> LayoutConfig {
        LayoutConfig::default()
    }

    #[test]
    fn empty_string_renders_background_page() {
        let font = GlyphFont::default_ascii();
        let img = render_text("", &font, &small_layout()).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn single_glyph_lands_at_margin_offset() {
        let font = GlyphFont::default_ascii();
        let layout = small_layout();
        let img = render_text("A", &font, &layout).unwrap();
        let mask = font.glyph('A');
        for y in 0..img.height {
            for x in 0..img.width {
                let inside =
                    (4..12).contains(&x) && (4..20).contains(&y);
                let expect = if inside && mask[(y - 4) * 8 + (x - 4)] {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(img.at(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn word_wrap_fills_multiple_rows_without_crossing_margin() {
        let font = GlyphFont::default_ascii();
        let layout = small_layout(); // 15 columns
        let text = "alpha beta gamma delta epsilon zeta eta theta iota"; // 51 chars
        let lines = layout_lines(text, layout.columns(&font), Wrap::Word);
        assert!(lines.len() >= 3, "{lines:?}");
        for l in &lines {
            assert!(l.chars().count() <= layout.columns(&font), "{l:?}");
        }
        let img = render_text(text, &font, &layout).unwrap();
        // Nothing may be inked right of the last full glyph column.
        let right_edge = layout.margin + layout.columns(&font) * font.cell_width;
        for y in 0..img.height {
            for x in right_edge..img.width {
                assert_eq!(img.at(x, y), 0.0);
            }
        }
    }

    #[test]
    fn overflow_error_mode_rejects_oversized_text() {
        let font = GlyphFont::default_ascii();
        let mut layout = small_layout();
        layout.overflow = Overflow::Error;
        let long = "x".repeat(10_000);
        assert!(render_text(&long, &font, &layout).is_err());
    }

    #[test]
    fn truncate_mode_keeps_prefix_stable() {
        // Appending text never alters pixels of already-rendered lines.
        let font = GlyphFont::default_ascii();
        let layout = small_layout();
        let base = "alpha beta gamma";
        let a = render_text(base, &font, &layout).unwrap();
        let b = render_text(&format!("{base} delta epsilon zeta"), &font, &layout).unwrap();
        // First text row is pixel rows 4..20.
        for y in 4..20 {
            for x in 0..a.width {
                assert_eq!(a.at(x, y), b.at(x, y), "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn binarize_is_inclusive_and_idempotent() {
        let img = PageImage::filled(3, 2, 0.5);
        let b = binarize(&img, 0.5).unwrap();
        assert!(b.pixels.iter().all(|&p| p == 1.0));
        let again = binarize(&b, 0.5).unwrap();
        assert_eq!(b, again);
        assert!(binarize(&img, 0.0).is_err());
        assert!(binarize(&img, 1.0).is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let img = PageImage {
            width: 2,
            height: 2,
            pixels: vec![1.0, 0.0, 0.0, 1.0],
        };
        let t: Tensor<f32> = image_to_tensor(&img);
        assert_eq!(t.shape(), [1, 1, 2, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(tensor_to_image(&t), img);
    }

    #[test]
    fn light_on_dark_inverts_background() {
        let font = GlyphFont::default_ascii();
        let mut layout = small_layout();
        layout.polarity = Polarity::LightOnDark;
        let img = render_text("", &font, &layout).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn newline_forces_break_and_tab_expands() {
        let lines = layout_lines("ab\ncd", 10, Wrap::Word);
        assert_eq!(lines, vec!["ab".to_string(), "cd".to_string()]);
        let lines = layout_lines("a\tb", 10, Wrap::Char);
        assert_eq!(lines, vec!["a    b".to_string()]);
    }

    #[test]
    fn one_char_difference_is_local_to_its_cell() {
        let font = GlyphFont::default_ascii();
        let layout = small_layout();
        let a = render_text("hello world", &font, &layout).unwrap();
        let b = render_text("hellp world", &font, &layout).unwrap();
        // Only the 5th cell (cols 36..44 with margin 4) may differ.
        for y in 0..a.height {
            for x in 0..a.width {
                if a.at(x, y) != b.at(x, y) {
                    assert!((36..44).contains(&x) && (4..20).contains(&y), "({x},{y})");
                }
            }
        }
    }
}
