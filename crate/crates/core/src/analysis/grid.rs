use crate::dataset::Image;
use crate::error::{Error, Result};

pub const GLYPH_W: usize = 3;
pub const GLYPH_H: usize = 5;
/// Caption strip height below each cell: one pixel above and below the text.
pub const STRIP: usize = GLYPH_H + 2;
/// Gap between cells, in pixels.
pub const GUTTER: usize = 2;

// Rows top to bottom, three bits each, most significant bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 3, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 2, 2],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

const LETTERS: [[u8; 5]; 26] = [
    [2, 5, 7, 5, 5],
    [6, 5, 6, 5, 6],
    [3, 4, 4, 4, 3],
    [6, 5, 5, 5, 6],
    [7, 4, 6, 4, 7],
    [7, 4, 6, 4, 4],
    [3, 4, 5, 5, 3],
    [5, 5, 7, 5, 5],
    [7, 2, 2, 2, 7],
    [1, 1, 1, 5, 2],
    [5, 5, 6, 5, 5],
    [4, 4, 4, 4, 7],
    [5, 7, 7, 5, 5],
    [6, 5, 5, 5, 5],
    [2, 5, 5, 5, 2],
    [6, 5, 6, 4, 4],
    [2, 5, 5, 6, 3],
    [6, 5, 6, 5, 5],
    [3, 4, 2, 1, 6],
    [7, 2, 2, 2, 2],
    [5, 5, 5, 5, 7],
    [5, 5, 5, 5, 2],
    [5, 5, 7, 7, 5],
    [5, 5, 2, 5, 5],
    [5, 5, 2, 2, 2],
    [7, 1, 2, 4, 7],
];

/// Bitmap rows for `ch`; unknown characters render as blanks.
pub fn glyph(ch: char) -> [u8; 5] {
    match ch.to_ascii_uppercase() {
        c @ '0'..='9' => DIGITS[c as usize - '0' as usize],
        c @ 'A'..='Z' => LETTERS[c as usize - 'A' as usize],
        '.' => [0, 0, 0, 0, 2],
        ',' => [0, 0, 0, 2, 4],
        ':' => [0, 2, 0, 2, 0],
        '-' => [0, 0, 7, 0, 0],
        '=' => [0, 7, 0, 7, 0],
        '/' => [1, 1, 2, 4, 4],
        '%' => [5, 1, 2, 4, 5],
        '_' => [0, 0, 0, 0, 7],
        _ => [0; 5],
    }
}

/// Pixel width of `text` at one pixel of spacing between glyphs.
pub fn text_width(text: &str) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        n * (GLYPH_W + 1) - 1
    }
}

fn draw_text(canvas: &mut Image, x0: usize, y0: usize, max_w: usize, text: &str) {
    let mut x = x0;
    for ch in text.chars() {
        if x + GLYPH_W > x0 + max_w {
            break;
        }
        for (dy, row) in glyph(ch).iter().enumerate() {
            for dx in 0..GLYPH_W {
                if row & (4 >> dx) != 0 {
                    for c in 0..canvas.channels() {
                        canvas.set(x + dx, y0 + dy, c, 255);
                    }
                }
            }
        }
        x += GLYPH_W + 1;
    }
}

/// Lay `images` out `columns` per row, each above a caption strip.
///
/// All images must share dimensions. Grayscale images are promoted when
/// mixed with RGB ones. Captions wider than a cell are cut at a glyph
/// boundary. `captions` is either empty or one per image.
pub fn emit_grid(images: &[Image], captions: &[String], columns: usize) -> Result<Image> {
    let Some(first) = images.first() else {
        return Err(Error::Precondition("grid needs at least one image".into()));
    };
    if columns == 0 {
        return Err(Error::Precondition("grid needs at least one column".into()));
    }
    if !captions.is_empty() && captions.len() != images.len() {
        return Err(Error::shape(format!("{} captions for {} images", captions.len(), images.len())));
    }
    let (w, h) = (first.width(), first.height());
    if let Some(bad) = images.iter().find(|i| i.width() != w || i.height() != h) {
        return Err(Error::shape(format!("grid image is {}x{}, expected {w}x{h}", bad.width(), bad.height())));
    }
    let channels = images.iter().map(Image::channels).max().unwrap_or(1);
    if images.iter().any(|i| i.channels() != 1 && i.channels() != channels) {
        return Err(Error::shape("grid mixes incompatible channel counts"));
    }
    let cols = columns.min(images.len());
    let rows = images.len().div_ceil(columns);
    let cell_h = h + STRIP;
    let width = cols * w + (cols - 1) * GUTTER;
    let height = rows * cell_h + (rows - 1) * GUTTER;
    let mut canvas = Image::filled(width, height, channels, 0)?;
    for (i, img) in images.iter().enumerate() {
        let x0 = (i % columns) * (w + GUTTER);
        let y0 = (i / columns) * (cell_h + GUTTER);
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    let src = if img.channels() == 1 { 0 } else { c };
                    canvas.set(x0 + x, y0 + y, c, img.get(x, y, src));
                }
            }
        }
        if let Some(text) = captions.get(i) {
            draw_text(&mut canvas, x0, y0 + h + 1, w, text);
        }
    }
    Ok(canvas)
}
