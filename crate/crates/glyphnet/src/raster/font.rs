//! Bitmap glyph fonts.
//!
//! Font files are plain text: a `font <cell_width> <cell_height>` header,
//! then per glyph a `glyph U+XXXX` line followed by `cell_height` rows of
//! `.`/`#` characters. An 8x16 ASCII font is embedded as the default.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_FONT: &str = include_str!("default8x16.font");

/// Monospace bitmap font. Glyph bitmasks are row-major, `true` = inked.
#[derive(Debug, Clone)]
pub struct GlyphFont {
    pub cell_width: usize,
    pub cell_height: usize,
    glyphs: HashMap<char, Vec<bool>>,
    fallback: Vec<bool>,
}

impl GlyphFont {
    /// The embedded 8x16 printable-ASCII font.
    pub fn default_ascii() -> GlyphFont {
        parse_font(DEFAULT_FONT, "<embedded>").expect("embedded font is valid")
    }

    pub fn glyph(&self, c: char) -> &[bool] {
        self.glyphs.get(&c).map(Vec::as_slice).unwrap_or(&self.fallback)
    }

    pub fn has_glyph(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    pub fn glyph_count(&self) -> usize {
        self.glyphs.len()
    }
}

/// Load a font file, or the embedded default when `path` is `None`.
pub fn load_font(path: Option<&Path>) -> Result<GlyphFont> {
    match path {
        None => Ok(GlyphFont::default_ascii()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            parse_font(&text, &p.display().to_string())
        }
    }
}

pub fn parse_font(text: &str, origin: &str) -> Result<GlyphFont> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty font file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "font" {
        return Err(err(hline + 1, "expected header `font <width> <height>`".into()));
    }
    let cell_width: usize = parts[1]
        .parse()
        .map_err(|_| err(hline + 1, format!("bad cell width {:?}", parts[1])))?;
    let cell_height: usize = parts[2]
        .parse()
        .map_err(|_| err(hline + 1, format!("bad cell height {:?}", parts[2])))?;
    if cell_width == 0 || cell_height == 0 {
        return Err(err(hline + 1, "cell dimensions must be positive".into()));
    }

    let mut glyphs: HashMap<char, Vec<bool>> = HashMap::new();
    while let Some((gline, gdecl)) = lines.next() {
        if gdecl.trim().is_empty() {
            continue;
        }
        let code = gdecl
            .strip_prefix("glyph U+")
            .ok_or_else(|| err(gline + 1, format!("expected `glyph U+XXXX`, got {gdecl:?}")))?;
        let cp = u32::from_str_radix(code.trim(), 16)
            .map_err(|_| err(gline + 1, format!("bad code point {code:?}")))?;
        let ch = char::from_u32(cp)
            .ok_or_else(|| err(gline + 1, format!("U+{cp:04X} is not a valid code point")))?;

        let mut mask = Vec::with_capacity(cell_width * cell_height);
        for _ in 0..cell_height {
            let (rline, row) = lines
                .next()
                .ok_or_else(|| err(gline + 1, format!("glyph U+{cp:04X} truncated")))?;
            if row.chars().count() != cell_width {
                return Err(err(
                    rline + 1,
                    format!(
                        "glyph row has {} bits, cell width is {}",
                        row.chars().count(),
                        cell_width
                    ),
                ));
            }
            for c in row.chars() {
                match c {
                    '#' => mask.push(true),
                    '.' => mask.push(false),
                    other => {
                        return Err(err(rline + 1, format!("invalid bit character {other:?}")))
                    }
                }
            }
        }
        glyphs.insert(ch, mask);
    }

    // Fallback for unmapped code points: a solid box with a 1px inset.
    let fallback = (0..cell_height)
        .flat_map(|y| {
            (0..cell_width).map(move |x| {
                x > 0 && x + 1 < cell_width && y > 0 && y + 1 < cell_height
            })
        })
        .collect();

    Ok(GlyphFont {
        cell_width,
        cell_height,
        glyphs,
        fallback,
    })
}
