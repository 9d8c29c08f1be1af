use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{GazeCase, GazePoint};
use crate::error::{Error, Result};

/// Parameters of the synthetic phantom: a smooth textured background with
/// one bright elliptical lesion, and a simulated gaze plot over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Range of full ellipse axis lengths, in pixels.
    pub lesion_axis_min: f64,
    pub lesion_axis_max: f64,
    /// Intensity added inside the lesion.
    pub lesion_contrast: f64,
    pub background_min: f64,
    pub background_max: f64,
    pub noise_sigma: f64,
    /// Highest spatial frequency of the background waves, in cycles per image.
    pub background_cycles: f64,
    pub gaze_len: usize,
    /// Range of saccade lengths, in pixels.
    pub step_min: f64,
    pub step_max: f64,
    pub min_lesion_visits: usize,
    /// Weight of the heading toward the lesion while searching, in `[0, 1]`.
    pub search_pull: f64,
    /// Range of consecutive fixations spent inside the lesion once found.
    pub dwell_min: usize,
    pub dwell_max: usize,
    /// Fixations outside the lesion stay more than this many pixels
    /// (Chebyshev) from it; saccades landing closer snap onto the lesion.
    pub clearance: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            lesion_axis_min: 6.0,
            lesion_axis_max: 20.0,
            lesion_contrast: 0.3,
            background_min: 0.2,
            background_max: 0.6,
            noise_sigma: 0.02,
            background_cycles: 2.0,
            gaze_len: 40,
            step_min: 1.0,
            step_max: 8.0,
            min_lesion_visits: 1,
            search_pull: 0.5,
            dwell_min: 3,
            dwell_max: 8,
            clearance: 6,
        }
    }
}

impl SynthConfig {
    /// Defaults for a `size × size` image, with lesion and saccade lengths
    /// scaled from the 64 px defaults. The clearance stays in pixels since
    /// it tracks the agent square.
    pub fn with_size(size: usize) -> Self {
        let d = Self::default();
        let k = size as f64 / d.width as f64;
        Self {
            width: size,
            height: size,
            lesion_axis_min: d.lesion_axis_min * k,
            lesion_axis_max: d.lesion_axis_max * k,
            step_min: d.step_min * k,
            step_max: d.step_max * k,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        if !(self.lesion_axis_min > 0.0 && self.lesion_axis_min <= self.lesion_axis_max) {
            return bad(format!(
                "lesion axis range [{}, {}] invalid",
                self.lesion_axis_min, self.lesion_axis_max
            ));
        }
        if self.lesion_axis_max + 2.0 > self.width.min(self.height) as f64 {
            return bad(format!(
                "lesion axis {} does not fit in a {}x{} image",
                self.lesion_axis_max, self.width, self.height
            ));
        }
        if self.lesion_axis_max + 2.0 * (self.clearance as f64 + 1.0) > self.width.min(self.height) as f64 {
            return bad(format!(
                "lesion axis {} with clearance {} leaves no room for outside fixations",
                self.lesion_axis_max, self.clearance
            ));
        }
        if !(0.0 <= self.background_min && self.background_min <= self.background_max) {
            return bad("background range invalid".into());
        }
        if self.gaze_len < 2 {
            return bad("gaze plot needs at least 2 points".into());
        }
        if !(self.step_min > 0.0 && self.step_min <= self.step_max) {
            return bad("saccade length range invalid".into());
        }
        if self.min_lesion_visits == 0 || self.min_lesion_visits > self.gaze_len {
            return bad("min_lesion_visits must be in [1, gaze_len]".into());
        }
        if !(0.0..=1.0).contains(&self.search_pull) {
            return bad("search_pull must lie in [0, 1]".into());
        }
        if self.dwell_min == 0 || self.dwell_min > self.dwell_max {
            return bad("dwell range invalid".into());
        }
        if self.noise_sigma < 0.0 || self.lesion_contrast < 0.0 || self.background_cycles < 0.0 {
            return bad("noise, contrast and background frequency must be non-negative".into());
        }
        Ok(())
    }
}

/// Rotated ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_a: f64,
    pub semi_b: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.semi_a;
        let v = (-dx * s + dy * c) / self.semi_b;
        u * u + v * v <= 1.0
    }
}

/// Draws one case. Intensities are quantized to multiples of 1/255 so the
/// case survives an 8-bit image round trip unchanged.
pub fn generate_case<R: Rng>(cfg: &SynthConfig, case_id: &str, rng: &mut R) -> Result<GazeCase> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);

    let semi_a = rng.gen_range(cfg.lesion_axis_min..=cfg.lesion_axis_max) / 2.0;
    let semi_b = rng.gen_range(cfg.lesion_axis_min..=cfg.lesion_axis_max) / 2.0;
    let reach = semi_a.max(semi_b);
    let ellipse = Ellipse {
        cx: rng.gen_range(reach..=(w as f64 - 1.0 - reach)),
        cy: rng.gen_range(reach..=(h as f64 - 1.0 - reach)),
        semi_a,
        semi_b,
        angle: rng.gen_range(0.0..PI),
    };
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            mask[y * w + x] = ellipse.contains(x as f64, y as f64);
        }
    }
    // the center pixel is always inside: semi axes are at least 0.5 px
    let center = GazePoint::new(ellipse.cx.round() as usize, ellipse.cy.round() as usize);
    mask[center.y * w + center.x] = true;

    let image = background(cfg, &mask, rng);
    let mut case = GazeCase {
        case_id: case_id.to_string(),
        width: w,
        height: h,
        image,
        mask,
        gaze: Vec::new(),
    };

    const ATTEMPTS: usize = 50;
    for _ in 0..ATTEMPTS {
        case.gaze = gaze_walk(cfg, &case, center, rng);
        if case.lesion_visits() >= cfg.min_lesion_visits {
            return Ok(case);
        }
    }
    // reroute: pull the earliest fixations after the start onto the lesion center
    let mut i = 1;
    while case.lesion_visits() < cfg.min_lesion_visits {
        case.gaze[i] = center;
        i += 1;
    }
    Ok(case)
}

fn background<R: Rng>(cfg: &SynthConfig, mask: &[bool], rng: &mut R) -> Vec<f32> {
    let (w, h) = (cfg.width, cfg.height);
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..=1.0) * cfg.background_cycles / w as f64,
                rng.gen_range(-1.0..=1.0) * cfg.background_cycles / h as f64,
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let field: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            waves
                .iter()
                .map(|&(fx, fy, ph)| (2.0 * PI * (fx * x + fy * y) + ph).cos())
                .sum()
        })
        .collect();
    let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated non-negative");
    field
        .iter()
        .zip(mask)
        .map(|(&f, &inside)| {
            let base = cfg.background_min + (f - lo) / span * (cfg.background_max - cfg.background_min);
            let v = base + noise.sample(rng) + if inside { cfg.lesion_contrast } else { 0.0 };
            quantize(v)
        })
        .collect()
}

fn quantize(v: f64) -> f32 {
    ((v.clamp(0.0, 1.0) * 255.0).round() as u8) as f32 / 255.0
}

/// Pixels within the clearance of the lesion, and the lesion pixels to snap to.
struct Halo {
    width: usize,
    near: Vec<bool>,
    lesion: Vec<GazePoint>,
}

impl Halo {
    fn new(case: &GazeCase, clearance: usize) -> Self {
        let (w, h) = (case.width, case.height);
        let mut near = vec![false; w * h];
        let mut lesion = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !case.mask[y * w + x] {
                    continue;
                }
                lesion.push(GazePoint::new(x, y));
                for ny in y.saturating_sub(clearance)..=(y + clearance).min(h - 1) {
                    for nx in x.saturating_sub(clearance)..=(x + clearance).min(w - 1) {
                        near[ny * w + nx] = true;
                    }
                }
            }
        }
        Self { width: w, near, lesion }
    }

    fn near(&self, p: GazePoint) -> bool {
        self.near[p.y * self.width + p.x]
    }

    /// First point clear of the halo along a random ray from `from`.
    fn escape<R: Rng>(&self, from: GazePoint, rng: &mut R) -> Option<GazePoint> {
        let h = self.near.len() / self.width;
        for _ in 0..32 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let (dx, dy) = (theta.cos(), theta.sin());
            for t in 1..self.width + h {
                let (x, y) = (from.x as f64 + dx * t as f64, from.y as f64 + dy * t as f64);
                if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (h - 1) as f64 {
                    break;
                }
                let p = GazePoint::new(x.round() as usize, y.round() as usize);
                if !self.near(p) {
                    return Some(p);
                }
            }
        }
        None
    }

    fn snap(&self, p: GazePoint) -> GazePoint {
        if !self.near(p) {
            return p;
        }
        let d2 = |q: &GazePoint| {
            let (dx, dy) = (q.x as i64 - p.x as i64, q.y as i64 - p.y as i64);
            dx * dx + dy * dy
        };
        *self
            .lesion
            .iter()
            .min_by_key(|q| d2(q))
            .expect("lesion mask is nonempty")
    }
}

/// Search, dwell, then wander: saccades drift toward the lesion until a
/// fixation lands on or near it, stay inside for a few fixations, then roam
/// the rest of the image without returning.
fn gaze_walk<R: Rng>(cfg: &SynthConfig, case: &GazeCase, target: GazePoint, rng: &mut R) -> Vec<GazePoint> {
    let (w, h) = (case.width as f64, case.height as f64);
    let clamp = |x: f64, y: f64| {
        GazePoint::new(
            x.clamp(0.0, w - 1.0).round() as usize,
            y.clamp(0.0, h - 1.0).round() as usize,
        )
    };

    let halo = Halo::new(case, cfg.clearance);
    let mut pos = loop {
        let p = GazePoint::new(rng.gen_range(0..case.width), rng.gen_range(0..case.height));
        if !halo.near(p) {
            break p;
        }
    };
    let mut gaze = vec![pos];
    let mut dwell_left: Option<usize> = None;
    while gaze.len() < cfg.gaze_len {
        let inside = case.mask_at(pos);
        if inside && dwell_left.is_none() {
            dwell_left = Some(rng.gen_range(cfg.dwell_min..=cfg.dwell_max) - 1);
        }
        let next = match dwell_left {
            Some(n) if n > 0 => {
                dwell_left = Some(n - 1);
                // small in-lesion jitter; keep the old fixation if it would leave
                let cand = clamp(
                    pos.x as f64 + rng.gen_range(-2i32..=2) as f64,
                    pos.y as f64 + rng.gen_range(-2i32..=2) as f64,
                );
                if case.mask_at(cand) {
                    cand
                } else {
                    pos
                }
            }
            _ => {
                let theta = rng.gen_range(0.0..2.0 * PI);
                let (mut dx, mut dy) = (theta.cos(), theta.sin());
                if dwell_left.is_none() {
                    let (tx, ty) = (target.x as f64 - pos.x as f64, target.y as f64 - pos.y as f64);
                    let norm = (tx * tx + ty * ty).sqrt().max(1e-9);
                    dx = (1.0 - cfg.search_pull) * dx + cfg.search_pull * tx / norm;
                    dy = (1.0 - cfg.search_pull) * dy + cfg.search_pull * ty / norm;
                    let n = (dx * dx + dy * dy).sqrt().max(1e-9);
                    dx /= n;
                    dy /= n;
                }
                let len = rng.gen_range(cfg.step_min..=cfg.step_max);
                let cand = clamp(pos.x as f64 + dx * len, pos.y as f64 + dy * len);
                match dwell_left {
                    None => halo.snap(cand),
                    Some(_) if !halo.near(cand) => cand,
                    // the lesion has been read: saccade clear of it
                    Some(_) => halo.escape(pos, rng).unwrap_or(pos),
                }
            }
        };
        gaze.push(next);
        pos = next;
    }
    gaze
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_cases_are_valid() {
        let cfg = SynthConfig::default();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = generate_case(&cfg, "c", &mut rng).unwrap();
            case.validate().unwrap();
            assert_eq!(case.gaze.len(), 40);
            assert!(!case.mask_at(case.gaze[0]));
        }
    }

    #[test]
    fn outside_fixations_keep_clearance() {
        let cfg = SynthConfig::default();
        let r = cfg.clearance as i64;
        for seed in 0..30 {
            let case = generate_case(&cfg, "c", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for g in case.gaze.iter().filter(|g| !case.mask_at(**g)) {
                for (i, _) in case.mask.iter().enumerate().filter(|(_, m)| **m) {
                    let (x, y) = ((i % case.width) as i64, (i / case.width) as i64);
                    assert!((x - g.x as i64).abs().max((y - g.y as i64).abs()) > r);
                }
            }
        }
    }

    #[test]
    fn lesion_is_read_in_one_block() {
        let cfg = SynthConfig::default();
        for seed in 0..30 {
            let case = generate_case(&cfg, "c", &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let inside: Vec<usize> = (0..case.gaze.len()).filter(|&i| case.mask_at(case.gaze[i])).collect();
            let (first, last) = (inside[0], *inside.last().unwrap());
            assert_eq!(last - first + 1, inside.len());
            assert!(inside.len() >= cfg.dwell_min && inside.len() <= cfg.dwell_max);
            assert!(last < case.gaze.len() - 1, "seed {seed}");
        }
    }

    #[test]
    fn scaled_sizes_generate() {
        for size in [24, 32, 128] {
            let cfg = SynthConfig::with_size(size);
            let case = generate_case(&cfg, "s", &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!((case.width, case.height), (size, size));
        }
        assert_eq!(SynthConfig::with_size(64), SynthConfig::default());
    }

    #[test]
    fn same_seed_same_case() {
        let cfg = SynthConfig::default();
        let a = generate_case(&cfg, "x", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_case(&cfg, "x", &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = generate_case(&cfg, "x", &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_lesion_rejected() {
        let cfg = SynthConfig {
            width: 16,
            height: 16,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(generate_case(&cfg, "x", &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn intensities_are_8bit_levels() {
        let cfg = SynthConfig::default();
        let case = generate_case(&cfg, "q", &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for &v in &case.image {
            let level = (v * 255.0).round();
            assert_eq!(level / 255.0, v);
        }
    }
}
