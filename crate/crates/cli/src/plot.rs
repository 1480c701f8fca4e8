//! PNG plots rendered directly onto a pixel canvas: training curves, severity
//! histogram overlays, and tiled sample grids.

use crate::font::{draw_text, text_width, GLYPH_H};
use anyhow::Context;
use facegen_core::gan::sample_grid;
use facegen_core::img::Image;
use facegen_core::metrics::SeverityHistogram;
use image::{Rgb, RgbImage};
use std::path::Path;

pub const PLOT_W: u32 = 640;
pub const PLOT_H: u32 = 480;

const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 48.0;

const BLACK: Rgb<u8> = Rgb([20, 20, 20]);
const GRAY: Rgb<u8> = Rgb([200, 200, 200]);
pub const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 69, 65]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([127, 97, 66]),
];

pub struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(w: u32, h: u32) -> Canvas {
        Canvas { img: RgbImage::from_pixel(w, h, Rgb([255, 255, 255])) }
    }

    pub fn set(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    pub fn blend(&mut self, x: i64, y: i64, color: Rgb<u8>, alpha: f64) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            let old = self.img.get_pixel(x as u32, y as u32).0;
            let mix = |a: u8, b: u8| (a as f64 * (1.0 - alpha) + b as f64 * alpha).round() as u8;
            let px = Rgb([mix(old[0], color[0]), mix(old[1], color[1]), mix(old[2], color[2])]);
            self.img.put_pixel(x as u32, y as u32, px);
        }
    }

    /// Bresenham line.
    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>, alpha: f64) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.blend(x, y, color, alpha);
            }
        }
    }

    pub fn marker(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        self.fill_rect(x - 1, y - 1, x + 1, y + 1, color, 1.0);
    }

    pub fn text(&mut self, s: &str, x: i64, y: i64, color: Rgb<u8>) {
        draw_text(s, x, y, |px, py| self.set(px, py, color));
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        self.img
            .save(path)
            .with_context(|| format!("writing plot {}", path.display()))
    }
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else if a >= 0.01 {
        format!("{v:.3}")
    } else {
        format!("{v:.1e}")
    }
}

/// Maps data coordinates to canvas pixels inside the axes box.
struct AxesBox {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl AxesBox {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> AxesBox {
        let pad = |lo: f64, hi: f64| {
            if (hi - lo).abs() < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        AxesBox { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> i64 {
        let w = PLOT_W as f64 - MARGIN_L - MARGIN_R;
        (MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * w).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let h = PLOT_H as f64 - MARGIN_T - MARGIN_B;
        (PLOT_H as f64 - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * h).round() as i64
    }

    fn draw(&self, c: &mut Canvas, title: &str, x_label: &str, y_label: &str) {
        let (left, right) = (self.px(self.x0), self.px(self.x1));
        let (bottom, top) = (self.py(self.y0), self.py(self.y1));
        // Tick grid plus labels on both axes.
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x0 + f * (self.x1 - self.x0);
            let yv = self.y0 + f * (self.y1 - self.y0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            c.line(xp, top, xp, bottom, GRAY);
            c.line(left, yp, right, yp, GRAY);
            let xs = fmt_num(xv);
            c.text(&xs, xp - text_width(&xs) as i64 / 2, bottom + 6, BLACK);
            let ys = fmt_num(yv);
            c.text(&ys, left - 6 - text_width(&ys) as i64, yp - GLYPH_H as i64 / 2, BLACK);
        }
        c.line(left, bottom, right, bottom, BLACK);
        c.line(left, top, left, bottom, BLACK);
        c.text(title, (PLOT_W as i64 - text_width(title) as i64) / 2, 8, BLACK);
        c.text(
            x_label,
            (PLOT_W as i64 - text_width(x_label) as i64) / 2,
            PLOT_H as i64 - GLYPH_H as i64 - 6,
            BLACK,
        );
        c.text(y_label, 4, top - GLYPH_H as i64 - 6, BLACK);
    }

    fn legend(&self, c: &mut Canvas, entries: &[(&str, Rgb<u8>)]) {
        let w = entries.iter().map(|(s, _)| text_width(s)).max().unwrap_or(0) as i64 + 18;
        let x = self.px(self.x1) - w - 6;
        let mut y = self.py(self.y1) + 6;
        for (label, color) in entries {
            c.fill_rect(x, y + 1, x + 8, y + 5, *color, 1.0);
            c.text(label, x + 12, y, BLACK);
            y += GLYPH_H as i64 + 3;
        }
    }
}

pub struct CurveSeries {
    pub label: String,
    /// (x, y) points in data coordinates, already ordered by x.
    pub points: Vec<(f64, f64)>,
}

/// Line chart of one or more metric-versus-progress curves.
pub fn plot_curves(
    series: &[CurveSeries],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> anyhow::Result<()> {
    anyhow::ensure!(
        series.iter().any(|s| !s.points.is_empty()),
        "no data points to plot"
    );
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let axes = AxesBox::new(x0, x1, 0.0, y1);
    let mut c = Canvas::new(PLOT_W, PLOT_H);
    axes.draw(&mut c, title, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for pair in s.points.windows(2) {
            c.line(
                axes.px(pair[0].0),
                axes.py(pair[0].1),
                axes.px(pair[1].0),
                axes.py(pair[1].1),
                color,
            );
        }
        for &(x, y) in &s.points {
            c.marker(axes.px(x), axes.py(y), color);
        }
    }
    let entries: Vec<(&str, Rgb<u8>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (s.label.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    axes.legend(&mut c, &entries);
    c.save(path)
}

/// Overlaid real/generated severity histograms on their shared bin edges.
pub fn plot_severity_overlay(
    real: &SeverityHistogram,
    fake: &SeverityHistogram,
    path: &Path,
) -> anyhow::Result<()> {
    anyhow::ensure!(
        real.bin_edges == fake.bin_edges,
        "histograms must share bin edges"
    );
    let y_max = real
        .weights
        .iter()
        .chain(&fake.weights)
        .cloned()
        .fold(0.0f64, f64::max);
    let axes = AxesBox::new(real.bin_edges[0], *real.bin_edges.last().unwrap(), 0.0, y_max);
    let mut c = Canvas::new(PLOT_W, PLOT_H);
    axes.draw(&mut c, "SEVERITY HISTOGRAMS", "SEVERITY", "MASS");
    let base = axes.py(0.0) - 1;
    for (hist, color) in [(real, PALETTE[0]), (fake, PALETTE[1])] {
        for (i, &w) in hist.weights.iter().enumerate() {
            let x0 = axes.px(hist.bin_edges[i]) + 1;
            let x1 = axes.px(hist.bin_edges[i + 1]) - 1;
            let top = axes.py(w);
            if top < base {
                c.fill_rect(x0, top, x1, base, color, 0.45);
            }
        }
    }
    axes.legend(&mut c, &[("REAL", PALETTE[0]), ("GENERATED", PALETTE[1])]);
    c.save(path)
}

/// Tile generated `[-1, 1]` images into a `per_side` x `per_side` PNG.
pub fn save_sample_grid(images: &[Image], per_side: usize, path: &Path) -> anyhow::Result<()> {
    anyhow::ensure!(
        images.len() >= per_side * per_side,
        "need {} images for a {per_side}x{per_side} grid, got {}",
        per_side * per_side,
        images.len()
    );
    let grid = sample_grid(images, per_side).to_unit();
    grid.save_png(path)
        .with_context(|| format!("writing sample grid {}", path.display()))
}
