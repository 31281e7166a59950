//! Fixed 8x8 bitmap text rendering.

use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};
use image::{Rgb, RgbImage};

pub const CELL: u32 = 8;

/// Drawn for characters the font does not cover.
const PLACEHOLDER: [u8; 8] = [0xFF, 0x81, 0x81, 0x81, 0x81, 0x81, 0x81, 0xFF];

pub fn glyph(c: char) -> [u8; 8] {
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .unwrap_or(PLACEHOLDER)
}

pub fn has_glyph(c: char) -> bool {
    BASIC_FONTS.get(c).is_some() || LATIN_FONTS.get(c).is_some()
}

/// Unscaled extent of a string: one cell per character.
pub fn text_size(text: &str) -> (u32, u32) {
    (CELL * text.chars().count() as u32, CELL)
}

/// Renders `text` at 1x into a row-major mask.
fn mask(text: &str) -> (u32, Vec<bool>) {
    let chars: Vec<char> = text.chars().collect();
    let w = CELL * chars.len() as u32;
    let mut bits = vec![false; (w * CELL) as usize];
    for (ci, c) in chars.iter().enumerate() {
        for (row, byte) in glyph(*c).iter().enumerate() {
            for col in 0..8u32 {
                if byte & (1 << col) != 0 {
                    let x = ci as u32 * CELL + col;
                    bits[(row as u32 * w + x) as usize] = true;
                }
            }
        }
    }
    (w, bits)
}

/// Draws `text` stretched with nearest-neighbour sampling to exactly fill
/// the `w`×`h` rectangle at (`x`, `y`). Pixels falling off the image are
/// dropped.
pub fn draw_text_fit(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, text: &str, ink: Rgb<u8>) {
    let (mw, bits) = mask(text);
    if mw == 0 || w == 0 || h == 0 {
        return;
    }
    let (iw, ih) = img.dimensions();
    for dy in 0..h {
        let py = y + dy;
        if py >= ih {
            break;
        }
        let sy = (dy as u64 * CELL as u64 / h as u64) as u32;
        for dx in 0..w {
            let px = x + dx;
            if px >= iw {
                break;
            }
            let sx = (dx as u64 * mw as u64 / w as u64) as u32;
            if bits[(sy * mw + sx) as usize] {
                img.put_pixel(px, py, ink);
            }
        }
    }
}

/// Draws `text` at an integer scale; returns the drawn extent.
pub fn draw_text(img: &mut RgbImage, x: u32, y: u32, scale: u32, text: &str, ink: Rgb<u8>) -> (u32, u32) {
    let (w, h) = text_size(text);
    let (w, h) = (w * scale, h * scale);
    draw_text_fit(img, x, y, w, h, text, ink);
    (w, h)
}
