//! Rule-based skin pixel detection and Monk skin tone assignment.
//!
//! A pixel is skin when it passes both the RGB rule and the YCrCb rule
//! below. YCrCb uses the full-range BT.601 transform:
//!
//! ```text
//! Y  = 0.299 R + 0.587 G + 0.114 B
//! Cr = (R - Y) * 0.713 + 128
//! Cb = (B - Y) * 0.564 + 128
//! ```

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MST_PALETTE_JSON: &str = include_str!("../../data/mst_palette.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbRule {
    pub r_min: f64,
    pub g_min: f64,
    pub b_min: f64,
    /// max(R,G,B) - min(R,G,B) must exceed this.
    pub spread_min: f64,
    /// |R - G| must exceed this.
    pub rg_diff_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YcrcbRule {
    pub y_min: f64,
    pub cr_min: f64,
    pub cb_min: f64,
    /// `(slope, intercept)` pairs with `Cr <= slope * Cb + intercept`.
    pub upper_lines: Vec<(f64, f64)>,
    /// `(slope, intercept)` pairs with `Cr >= slope * Cb + intercept`.
    pub lower_lines: Vec<(f64, f64)>,
}

/// Threshold table for [`is_skin`]. The default is the normative rule set;
/// a JSON file with the same shape can replace it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinRules {
    pub rgb: RgbRule,
    pub ycrcb: YcrcbRule,
}

impl Default for SkinRules {
    fn default() -> Self {
        SkinRules {
            rgb: RgbRule {
                r_min: 95.0,
                g_min: 40.0,
                b_min: 20.0,
                spread_min: 15.0,
                rg_diff_min: 15.0,
            },
            ycrcb: YcrcbRule {
                y_min: 80.0,
                cr_min: 135.0,
                cb_min: 85.0,
                upper_lines: vec![(1.5862, 20.0), (-1.15, 301.75), (-2.2857, 432.85)],
                lower_lines: vec![(0.3448, 76.2069), (-4.5652, 234.5652)],
            },
        }
    }
}

impl SkinRules {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid("skin rules", format!("{}: {e}", path.display())))
    }
}

/// `(Y, Cr, Cb)` of an RGB pixel.
pub fn ycrcb([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    (y, (r - y) * 0.713 + 128.0, (b - y) * 0.564 + 128.0)
}

pub fn is_skin(rules: &SkinRules, px: [u8; 3]) -> bool {
    let [r, g, b] = px.map(f64::from);
    let rgb = &rules.rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let rgb_ok = r > rgb.r_min
        && g > rgb.g_min
        && b > rgb.b_min
        && max - min > rgb.spread_min
        && (r - g).abs() > rgb.rg_diff_min
        && r > g
        && r > b;
    if !rgb_ok {
        return false;
    }
    let (y, cr, cb) = ycrcb(px);
    let yc = &rules.ycrcb;
    y > yc.y_min
        && cr > yc.cr_min
        && cb > yc.cb_min
        && yc.upper_lines.iter().all(|&(m, c)| cr <= m * cb + c)
        && yc.lower_lines.iter().all(|&(m, c)| cr >= m * cb + c)
}

/// Row-major RGB image. Alpha is dropped on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[u8; 3]>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize {
            return Err(Error::invalid(
                "image",
                format!("{}x{} image with {} pixels", width, height, pixels.len()),
            ));
        }
        Ok(PixelImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        PixelImage {
            width,
            height,
            pixels: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (width, height) = img.dimensions();
        PixelImage::new(width, height, img.pixels().map(|p| p.0).collect())
    }

    pub fn get(&self, x: u32, y: u32) -> Option<[u8; 3]> {
        (x < self.width && y < self.height).then(|| self.pixels[(y * self.width + x) as usize])
    }
}

pub fn skin_mask(img: &PixelImage, rules: &SkinRules) -> Vec<bool> {
    img.pixels.iter().map(|&px| is_skin(rules, px)).collect()
}

/// Monk skin tone index, 1 (lightest) to 10 (darkest).
pub type ToneIndex = u8;

/// Ten reference tones, lightest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MstPalette {
    pub tones: Vec<[u8; 3]>,
}

impl MstPalette {
    pub const LEN: usize = 10;

    pub fn new(tones: Vec<[u8; 3]>) -> Result<Self> {
        if tones.len() != Self::LEN {
            return Err(Error::invalid("palette", format!("expected 10 tones, got {}", tones.len())));
        }
        Ok(MstPalette { tones })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let p: MstPalette = serde_json::from_str(json).map_err(|e| Error::invalid("palette", e.to_string()))?;
        MstPalette::new(p.tones)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MstPalette::from_json(&text)
    }

    /// Published Monk scale swatches shipped in `data/mst_palette.json`.
    pub fn builtin() -> &'static MstPalette {
        static P: OnceLock<MstPalette> = OnceLock::new();
        P.get_or_init(|| MstPalette::from_json(MST_PALETTE_JSON).expect("embedded palette is valid"))
    }

    pub fn tone(&self, index: ToneIndex) -> Option<[u8; 3]> {
        self.tones.get((index as usize).checked_sub(1)?).copied()
    }

    /// Closest tone by Euclidean RGB distance; ties go to the lower index.
    pub fn nearest(&self, rgb: [f64; 3]) -> ToneIndex {
        let mut best = (f64::INFINITY, 0usize);
        for (i, t) in self.tones.iter().enumerate() {
            let d: f64 = (0..3).map(|c| (rgb[c] - t[c] as f64).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 as ToneIndex + 1
    }
}

/// Mean RGB of the skin pixels, or `None` when there are none.
pub fn mean_skin_rgb(img: &PixelImage, rules: &SkinRules) -> Option<[f64; 3]> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for px in img.pixels.iter().filter(|&&px| is_skin(rules, px)) {
        for c in 0..3 {
            sum[c] += px[c] as u64;
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|s| s as f64 / n as f64))
}

pub fn estimate_skin_tone(img: &PixelImage, palette: &MstPalette, rules: &SkinRules) -> Option<ToneIndex> {
    mean_skin_rgb(img, rules).map(|rgb| palette.nearest(rgb))
}
