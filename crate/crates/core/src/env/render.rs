use serde::{Deserialize, Serialize};

use super::GazeCase;
use crate::error::{Error, Result};

/// Transparency and size of the gaze and agent overlays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayConfig {
    pub alpha: f32,
    /// Side length of the agent square, in pixels.
    pub square_size: usize,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            square_size: 11,
        }
    }
}

/// `height × width × 3` RGB image in `[0, 1]`, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedState {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl RenderedState {
    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

#[inline]
fn blend(px: &mut [f32], color: [f32; 3], alpha: f32) {
    for (c, target) in px.iter_mut().zip(color) {
        *c = ((1.0 - alpha) * *c + alpha * target).clamp(0.0, 1.0);
    }
}

/// Grayscale replicated to RGB, every fixation blended red, then the agent
/// square around fixation `index` blended blue on top.
pub fn render_state(case: &GazeCase, index: usize, overlay: &OverlayConfig) -> Result<RenderedState> {
    let mut pixels = vec![0.0; case.width * case.height * 3];
    render_into(case, index, overlay, &mut pixels)?;
    Ok(RenderedState {
        height: case.height,
        width: case.width,
        pixels,
    })
}

/// Same as [`render_state`], writing into a caller-provided buffer.
pub fn render_into(case: &GazeCase, index: usize, overlay: &OverlayConfig, out: &mut [f32]) -> Result<()> {
    case.check_index(index)?;
    let (w, h) = (case.width, case.height);
    if out.len() != w * h * 3 {
        return Err(Error::Dimension {
            context: "render buffer",
            expected: w * h * 3,
            actual: out.len(),
        });
    }
    for (px, &g) in out.chunks_exact_mut(3).zip(&case.image) {
        px.fill(g);
    }
    // a pixel fixated several times is tinted once
    let mut tinted = vec![false; w * h];
    for &g in &case.gaze {
        let i = case.pixel_index(g);
        if !std::mem::replace(&mut tinted[i], true) {
            blend(&mut out[i * 3..i * 3 + 3], [1.0, 0.0, 0.0], overlay.alpha);
        }
    }
    let center = case.gaze[index];
    let half = overlay.square_size / 2;
    let (x0, x1) = (center.x.saturating_sub(half), (center.x + half).min(w - 1));
    let (y0, y1) = (center.y.saturating_sub(half), (center.y + half).min(h - 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let i = (y * w + x) * 3;
            blend(&mut out[i..i + 3], [0.0, 0.0, 1.0], overlay.alpha);
        }
    }
    Ok(())
}
