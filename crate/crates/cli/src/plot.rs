//! Minimal curve rendering: one PNG per scalar series, polyline on a
//! white canvas with a light grid. Axis ranges land in the sidecar index
//! (`plots.json`) rather than as rendered text.

use crate::CliError;
use image::{Rgb, RgbImage};
use serde::Serialize;
use std::path::Path;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;

#[derive(Debug, Serialize)]
pub struct SeriesInfo {
    pub name: String,
    pub file: String,
    pub min: f64,
    pub max: f64,
    pub final_value: f64,
    pub points: usize,
}

fn draw_line(img: &mut RgbImage, (x0, y0): (f32, f32), (x1, y1): (f32, f32), color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f32 / steps as f32;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        if x >= 0.0 && y >= 0.0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Renders one series (x = epoch, y = value) to `path`.
pub fn render_series(points: &[(f64, f64)], path: &Path) -> Result<(), CliError> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let grid = Rgb([225, 225, 225]);
    let axis = Rgb([60, 60, 60]);
    let line = Rgb([31, 90, 166]);

    let (x0, x1) = (MARGIN as f32, (WIDTH - MARGIN) as f32);
    let (y0, y1) = ((HEIGHT - MARGIN) as f32, MARGIN as f32);
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f32 / 5.0;
        let fy = y0 + (y1 - y0) * i as f32 / 5.0;
        draw_line(&mut img, (fx, y0), (fx, y1), grid);
        draw_line(&mut img, (x0, fy), (x1, fy), grid);
    }
    draw_line(&mut img, (x0, y0), (x1, y0), axis);
    draw_line(&mut img, (x0, y0), (x0, y1), axis);

    if !points.is_empty() {
        let (min_x, max_x) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        let (min_y, max_y) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        let span_x = (max_x - min_x).max(1e-12);
        let span_y = (max_y - min_y).max(1e-12);
        let project = |(px, py): (f64, f64)| -> (f32, f32) {
            (
                x0 + ((px - min_x) / span_x) as f32 * (x1 - x0),
                y0 + ((py - min_y) / span_y) as f32 * (y1 - y0),
            )
        };
        for pair in points.windows(2) {
            draw_line(&mut img, project(pair[0]), project(pair[1]), line);
        }
        for &p in points {
            let (px, py) = project(p);
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let (qx, qy) = (px as i32 + dx, py as i32 + dy);
                    if qx >= 0 && qy >= 0 && (qx as u32) < WIDTH && (qy as u32) < HEIGHT {
                        img.put_pixel(qx as u32, qy as u32, line);
                    }
                }
            }
        }
    }
    img.save(path)
        .map_err(|e| CliError::Data(format!("writing plot {}: {e}", path.display())))
}
