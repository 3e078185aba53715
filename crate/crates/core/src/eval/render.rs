//! Contour panels: one row per field, one column per reconstruction, with a
//! colour scale shared along each row.

use std::path::Path;

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Channel, FieldGrid, CHANNELS};

const CELL: u32 = 128;
const GAP: u32 = 8;
const LEFT: u32 = 48;
const TOP: u32 = 28;
const RIGHT: u32 = 104;
const TEXT_BAND: u32 = 14;
const LEVELS: f64 = 16.0;

pub struct PanelColumn {
    pub label: String,
    pub grid: FieldGrid,
    /// Relative errors to print under each field, if any.
    pub errors: Option<[f64; CHANNELS]>,
}

pub struct Panel {
    pub sample_id: usize,
    pub q: f64,
    pub columns: Vec<PanelColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowAnnotation {
    pub channel: String,
    pub vmin: f64,
    pub vmax: f64,
    pub errors: Vec<Option<f64>>,
    pub texts: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelAnnotations {
    pub sample_id: usize,
    pub q: f64,
    pub columns: Vec<String>,
    pub rows: Vec<RowAnnotation>,
}

/// Formats with four significant digits in plain decimal notation where
/// that stays short, scientific otherwise.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (3 - mag).max(0) as usize, v)
    } else {
        format!("{v:.3e}")
    }
}

fn jet(t: f64) -> Rgb<u8> {
    let c = |x: f64| ((1.5 - x.abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([c(4.0 * t - 3.0), c(4.0 * t - 2.0), c(4.0 * t - 1.0)])
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str) {
    let mut cx = x;
    for ch in text.chars() {
        let glyph = BASIC_FONTS.get(ch).unwrap_or([0; 8]);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) != 0 {
                    let (px, py) = (cx + col, y + row as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, Rgb([0, 0, 0]));
                    }
                }
            }
        }
        cx += 8;
    }
}

/// Renders the panel to `path` (PNG) and its annotations to the same path
/// with a `.json` extension. Returns the annotations.
pub fn render_contours(panel: &Panel, path: &Path) -> Result<PanelAnnotations> {
    if panel.columns.is_empty() {
        return Err(Error::invalid("panel has no columns"));
    }
    let ncols = panel.columns.len() as u32;
    let width = LEFT + ncols * (CELL + GAP) + RIGHT;
    let height = TOP + CHANNELS as u32 * (CELL + TEXT_BAND + GAP);
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    draw_text(&mut img, 4, 4, &format!("sample {}  Q = {}", panel.sample_id, format_sig(panel.q)));
    for (k, col) in panel.columns.iter().enumerate() {
        draw_text(&mut img, LEFT + k as u32 * (CELL + GAP), 16, &col.label);
    }

    let mut rows = Vec::with_capacity(CHANNELS);
    for ch in Channel::ALL {
        let c = ch.index();
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for col in &panel.columns {
            for v in col.grid.channel(ch) {
                vmin = vmin.min(*v);
                vmax = vmax.max(*v);
            }
        }
        if !(vmin.is_finite() && vmax.is_finite()) {
            return Err(Error::invalid(format!("non-finite values in {} row", ch.name())));
        }
        let span = if vmax > vmin { vmax - vmin } else { 1.0 };
        let y0 = TOP + c as u32 * (CELL + TEXT_BAND + GAP);
        draw_text(&mut img, 4, y0 + CELL / 2 - 4, ch.name());
        let mut errors = Vec::new();
        let mut texts = Vec::new();
        for (k, col) in panel.columns.iter().enumerate() {
            let x0 = LEFT + k as u32 * (CELL + GAP);
            let (nx, ny) = col.grid.resolution();
            let data = col.grid.channel(ch);
            for py in 0..CELL {
                // image rows run top-down, grid rows bottom-up
                let j = ((CELL - 1 - py) as usize * ny) / CELL as usize;
                for px in 0..CELL {
                    let i = (px as usize * nx) / CELL as usize;
                    let t = (data[j * nx + i] - vmin) / span;
                    let t = ((t * LEVELS).floor().min(LEVELS - 1.0) + 0.5) / LEVELS;
                    img.put_pixel(x0 + px, y0 + py, jet(t));
                }
            }
            let e = col.errors.map(|e| e[c]);
            let text = e.map(format_sig);
            if let Some(t) = &text {
                draw_text(&mut img, x0, y0 + CELL + 3, &format!("e={t}"));
            }
            errors.push(e);
            texts.push(text);
        }
        let xr = LEFT + ncols * (CELL + GAP);
        draw_text(&mut img, xr, y0 + 2, &format!("max {}", format_sig(vmax)));
        draw_text(&mut img, xr, y0 + CELL - 10, &format!("min {}", format_sig(vmin)));
        for py in 0..CELL {
            let t = ((CELL - 1 - py) as f64 / (CELL - 1) as f64 * LEVELS).floor().min(LEVELS - 1.0);
            for px in 0..10 {
                img.put_pixel(xr + px, y0 + 14 + py * (CELL - 28) / CELL, jet((t + 0.5) / LEVELS));
            }
        }
        rows.push(RowAnnotation { channel: ch.name().to_string(), vmin, vmax, errors, texts });
    }

    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path)?;
    let notes = PanelAnnotations {
        sample_id: panel.sample_id,
        q: panel.q,
        columns: panel.columns.iter().map(|c| c.label.clone()).collect(),
        rows,
    };
    let side = path.with_extension("json");
    let text = serde_json::to_string_pretty(&notes).map_err(|e| Error::json(&side, e))?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    #[test]
    fn four_significant_digits() {
        assert_eq!(format_sig(0.123456), "0.1235");
        assert_eq!(format_sig(1.5), "1.500");
        assert_eq!(format_sig(0.00098761), "0.0009876");
        assert_eq!(format_sig(1234.4), "1234");
        assert_eq!(format_sig(2.5e-7), "2.500e-7");
        assert_eq!(format_sig(0.0), "0");
    }

    #[test]
    fn jet_endpoints() {
        assert_eq!(jet(0.0), Rgb([0, 0, 128]));
        assert_eq!(jet(1.0), Rgb([128, 0, 0]));
    }

    #[test]
    fn rows_share_one_scale() {
        let dir = tempfile::tempdir().unwrap();
        let lr = FieldGrid::from_fn(GridShape::unit(8), 1.0, |x, y| [x, y, x + y, x - y, x * y]);
        let hr = FieldGrid::from_fn(GridShape::unit(32), 1.0, |x, y| [2.0 * x, y, x + y, x - y, x * y]);
        let panel = Panel {
            sample_id: 3,
            q: 1.0,
            columns: vec![
                PanelColumn { label: "LR".into(), grid: lr, errors: None },
                PanelColumn { label: "HR".into(), grid: hr, errors: Some([0.5, 0.25, 0.125, 1.0, 0.0]) },
            ],
        };
        let path = dir.path().join("p.png");
        let notes = render_contours(&panel, &path).unwrap();
        assert!(path.exists() && path.with_extension("json").exists());
        assert_eq!(notes.rows.len(), CHANNELS);
        assert!(notes.rows[0].vmax > 1.9 && notes.rows[0].vmin < 0.1);
        assert_eq!(notes.rows[0].texts[1].as_deref(), Some("0.5000"));
        assert_eq!(notes.rows[0].texts[0], None);
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.width(), LEFT + 2 * (CELL + GAP) + RIGHT);
    }
}
