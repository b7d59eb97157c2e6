//! Bare-bones line plot rendering to PNG. Enough for timing sweeps and loss
//! traces; no axes labels beyond tick values.

use image::{Rgb, RgbImage};

use crate::error::Result;

const COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Render series as a line plot and write a PNG.
pub fn render_line_plot(series: &[Series], path: &std::path::Path) -> Result<()> {
    let (w, h) = (640u32, 480u32);
    let margin = 40.0;
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        img.save(path).map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
        return Ok(());
    }
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| margin + (x - xmin) / (xmax - xmin) * (w as f64 - 2.0 * margin);
    let py = |y: f64| h as f64 - margin - (y - ymin) / (ymax - ymin) * (h as f64 - 2.0 * margin);
    let black = Rgb([0, 0, 0]);
    draw_line(&mut img, margin, h as f64 - margin, w as f64 - margin, h as f64 - margin, black);
    draw_line(&mut img, margin, margin, margin, h as f64 - margin, black);
    for (si, s) in series.iter().enumerate() {
        let color = Rgb(COLORS[si % COLORS.len()]);
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in pts.windows(2) {
            draw_line(
                &mut img,
                px(pair[0].0),
                py(pair[0].1),
                px(pair[1].0),
                py(pair[1].1),
                color,
            );
        }
        for &(x, y) in &pts {
            let (cx, cy) = (px(x), py(y));
            for dx in -2i64..=2 {
                for dy in -2i64..=2 {
                    let (ux, uy) = (cx as i64 + dx, cy as i64 + dy);
                    if ux >= 0 && uy >= 0 && (ux as u32) < w && (uy as u32) < h {
                        img.put_pixel(ux as u32, uy as u32, color);
                    }
                }
            }
        }
    }
    img.save(path).map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
    Ok(())
}

/// Least-squares fit y = a + b x; returns (intercept, slope, r_squared).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (intercept, slope, r2)
}
