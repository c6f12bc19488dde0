//! Static PNG renderings of the CSV outputs. Plain rasters without text:
//! axes and colours only, the numbers live in the CSVs.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::data::NUM_BEAMS;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, PcaProjection, SweepRow};
use crate::output::write_atomic;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([200, 200, 200]);

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encoding: {e}")))?;
    write_atomic(path, |w| w.write_all(&buf))
}

/// Distinct colour per beam, walking the hue circle.
fn beam_colour(beam: u8) -> Rgb<u8> {
    let h = beam as f64 / NUM_BEAMS as f64 * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (v * 200.0) as u8;
    Rgb([c(r), c(g), c(b)])
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, c: Rgb<u8>) {
    for y in y0.max(0)..(y0 + h).min(img.height() as i64) {
        for x in x0.max(0)..(x0 + w).min(img.width() as i64) {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
    let n = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        fill_rect(img, x.round() as i64 - 1, y.round() as i64 - 1, 2, 2, c);
    }
}

/// Row-normalized confusion heatmap, true beam down, predicted across.
pub fn render_confusion(report: &EvalReport, path: &Path) -> Result<()> {
    let cell = 16i64;
    let n = NUM_BEAMS as i64;
    let mut img = RgbImage::from_pixel((n * cell) as u32, (n * cell) as u32, WHITE);
    for (i, row) in report.confusion.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &v) in row.iter().enumerate() {
            let f = if total == 0 { 0.0 } else { v as f64 / total as f64 };
            let shade = |base: f64| (255.0 - f * (255.0 - base)) as u8;
            let c = Rgb([shade(20.0), shade(60.0), shade(160.0)]);
            fill_rect(&mut img, j as i64 * cell, i as i64 * cell, cell - 1, cell - 1, c);
        }
    }
    save(&img, path)
}

/// Queries as small dots, prototypes as outlined squares, coloured by beam.
pub fn render_pca(pca: &PcaProjection, path: &Path) -> Result<()> {
    let size = 512.0;
    let margin = 24.0;
    let pts = pca
        .projected_queries
        .iter()
        .map(|(p, _)| p)
        .chain(pca.projected_prototypes.iter().map(|(_, p)| p));
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = |a: usize| (hi[a] - lo[a]).max(1e-12);
    let to_px = |p: &[f64; 2]| {
        let x = margin + (p[0] - lo[0]) / span(0) * (size - 2.0 * margin);
        let y = size - margin - (p[1] - lo[1]) / span(1) * (size - 2.0 * margin);
        (x.round() as i64, y.round() as i64)
    };
    let mut img = RgbImage::from_pixel(size as u32, size as u32, WHITE);
    for (p, beam) in &pca.projected_queries {
        let (x, y) = to_px(p);
        fill_rect(&mut img, x - 1, y - 1, 3, 3, beam_colour(*beam));
    }
    for (beam, p) in &pca.projected_prototypes {
        let (x, y) = to_px(p);
        fill_rect(&mut img, x - 5, y - 5, 11, 11, BLACK);
        fill_rect(&mut img, x - 4, y - 4, 9, 9, beam_colour(*beam));
    }
    save(&img, path)
}

/// Accuracy against log2(k): exact in blue, tolerance in orange, with
/// grid lines at quarter steps.
pub fn render_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let (w, h, m) = (512.0, 320.0, 24.0);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, WHITE);
    for q in 0..=4 {
        let y = h - m - q as f64 / 4.0 * (h - 2.0 * m);
        line(&mut img, (m, y), (w - m, y), GREY);
    }
    line(&mut img, (m, m), (m, h - m), BLACK);
    let lk: Vec<f64> = rows.iter().map(|r| (r.k as f64).log2()).collect();
    let (k0, k1) = lk
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let px = |lk: f64, acc: f64| {
        let x = m + if k1 > k0 { (lk - k0) / (k1 - k0) } else { 0.5 } * (w - 2.0 * m);
        (x, h - m - acc.clamp(0.0, 1.0) * (h - 2.0 * m))
    };
    for (pick, colour) in [(0usize, Rgb([31, 119, 180])), (1, Rgb([255, 127, 14]))] {
        let acc = |r: &SweepRow| if pick == 0 { r.mean_exact } else { r.mean_tolerance };
        let pts: Vec<(f64, f64)> = rows.iter().zip(&lk).map(|(r, &l)| px(l, acc(r))).collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], colour);
        }
        for &(x, y) in &pts {
            fill_rect(&mut img, x as i64 - 3, y as i64 - 3, 7, 7, colour);
        }
    }
    save(&img, path)
}
