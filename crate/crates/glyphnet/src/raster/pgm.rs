//! Binary PGM (P5) encode/decode for inspecting rendered pages.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::PageImage;

pub fn encode(image: &PageImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(
        image
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(image: &PageImage, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(image))?;
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<PageImage> {
    let bad = |msg: &str| Error::InvalidArg(format!("pgm: {msg}"));
    // Header tokens separated by whitespace; comments start with '#'.
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
        }
    }
    if tokens.len() < 4 || tokens[0] != "P5" {
        return Err(bad("expected P5 header"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maxval supported"));
    }
    pos += 1; // single whitespace after maxval
    let data = &bytes[pos..];
    if data.len() < width * height {
        return Err(bad("truncated pixel data"));
    }
    Ok(PageImage {
        width,
        height,
        pixels: data[..width * height]
            .iter()
            .map(|&b| b as f32 / maxval as f32)
            .collect(),
    })
}

pub fn read_pgm(path: &Path) -> Result<PageImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_binary_pages() {
        let img = PageImage {
            width: 3,
            height: 2,
            pixels: vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        };
        let back = decode(&encode(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"P6\n1 1\n255\nx").is_err());
        assert!(decode(b"P5\n4 4\n255\nxy").is_err());
    }
}
