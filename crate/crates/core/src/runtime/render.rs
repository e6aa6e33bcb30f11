//! Rasterisation of view shapes and terminal rendering.

use serde::{Deserialize, Serialize};

use crate::eval::Shape;
use crate::expr::{Color, ShapeKind};

/// Default raster side, in cells.
pub const RASTER_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Whether to paint a raster in addition to the shape list.
    pub raster: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: RASTER_SIZE, height: RASTER_SIZE, raster: true }
    }
}

impl RenderConfig {
    pub fn shapes_only() -> Self {
        Self { raster: false, ..Self::default() }
    }
}

/// Grid of palette indices, row-major, origin top-left.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

impl Raster {
    pub fn blank(width: usize, height: usize) -> Self {
        Self { width, height, cells: vec![Color::Black as u8; width * height] }
    }

    /// Paints shapes in order onto a black background; later shapes win.
    /// A cell is covered when its centre lies inside the shape.
    pub fn paint(width: usize, height: usize, shapes: &[Shape]) -> Self {
        let mut r = Self::blank(width, height);
        for s in shapes {
            r.draw(s);
        }
        r
    }

    pub fn get(&self, x: usize, y: usize) -> Color {
        Color::PALETTE[usize::from(self.cells[y * self.width + x]) % Color::PALETTE.len()]
    }

    fn fill_rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: Color) {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
            return;
        }
        let (x0, x1) = cell_range(x, x + w, self.width);
        let (y0, y1) = cell_range(y, y + h, self.height);
        for cy in y0..y1 {
            for cx in x0..x1 {
                self.cells[cy * self.width + cx] = color as u8;
            }
        }
    }

    fn draw(&mut self, s: &Shape) {
        match s.kind {
            ShapeKind::Rect => self.fill_rect(s.params[0], s.params[1], s.params[2], s.params[3], s.color),
            ShapeKind::Circle => {
                let (x, y, r) = (s.params[0], s.params[1], s.params[2]);
                if !(x.is_finite() && y.is_finite() && r.is_finite()) || r <= 0.0 {
                    return;
                }
                let (x0, x1) = cell_range(x - r, x + r, self.width);
                let (y0, y1) = cell_range(y - r, y + r, self.height);
                for cy in y0..y1 {
                    for cx in x0..x1 {
                        let dx = cx as f64 + 0.5 - x;
                        let dy = cy as f64 + 0.5 - y;
                        if dx * dx + dy * dy <= r * r {
                            self.cells[cy * self.width + cx] = s.color as u8;
                        }
                    }
                }
            }
            ShapeKind::Text => {
                // Glyphs are drawn as solid blocks; the raster has no font.
                let (x, y, size) = (s.params[0], s.params[1], s.params[2]);
                let n = s.text.as_deref().map_or(0, |t| t.chars().count());
                for i in 0..n {
                    let gx = x + i as f64 * size;
                    self.fill_rect(gx, y, (size - 1.0).max(1.0), size, s.color);
                }
            }
        }
    }
}

/// Cells whose centres fall in `[a, b)`, clipped to `0..n`.
fn cell_range(a: f64, b: f64, n: usize) -> (usize, usize) {
    let lo = (a - 0.5).ceil().max(0.0);
    let hi = (b - 0.5).ceil().max(0.0);
    let clip = |v: f64| if v >= n as f64 { n } else { v as usize };
    (clip(lo), clip(hi))
}

/// Renders a raster with 24-bit ANSI colours, two cells per character using
/// the upper half block.
pub fn render_ansi(r: &Raster) -> String {
    let mut out = String::new();
    for row in (0..r.height).step_by(2) {
        for x in 0..r.width {
            let (tr, tg, tb) = r.get(x, row).rgb();
            let (br, bg, bb) = if row + 1 < r.height { r.get(x, row + 1).rgb() } else { (0, 0, 0) };
            out.push_str(&format!("\x1b[38;2;{tr};{tg};{tb}m\x1b[48;2;{br};{bg};{bb}m\u{2580}"));
        }
        out.push_str("\x1b[0m\r\n");
    }
    out
}
