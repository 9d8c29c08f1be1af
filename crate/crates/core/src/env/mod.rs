//! The gaze-plot Markov decision process.
//!
//! An agent sits on one point of a radiologist's gaze plot and can move one
//! point forward, one point back, or stay. Gaze indices are 0-based here:
//! index 0 is the first fixation and episodes always start there.

mod render;

pub use render::{render_into, render_state, OverlayConfig, RenderedState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel coordinate of one fixation; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: usize,
    pub y: usize,
}

impl GazePoint {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// One image with its lesion annotation and the gaze plot recorded over it.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeCase {
    pub case_id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major grayscale intensities in `[0, 1]`.
    pub image: Vec<f32>,
    /// Row-major lesion membership.
    pub mask: Vec<bool>,
    /// Fixations in temporal order.
    pub gaze: Vec<GazePoint>,
}

impl GazeCase {
    pub fn pixel_index(&self, p: GazePoint) -> usize {
        p.y * self.width + p.x
    }

    pub fn contains(&self, p: GazePoint) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn mask_at(&self, p: GazePoint) -> bool {
        self.mask[self.pixel_index(p)]
    }

    pub fn lesion_visits(&self) -> usize {
        self.gaze.iter().filter(|&&g| self.mask_at(g)).count()
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Validation {
            case_id: self.case_id.clone(),
            reason: reason.into(),
        }
    }

    /// Checks every structural invariant except "the lesion was looked at".
    pub fn validate_structure(&self) -> Result<()> {
        let pixels = self.width * self.height;
        if pixels == 0 {
            return Err(self.fail("image has zero size"));
        }
        if self.image.len() != pixels || self.mask.len() != pixels {
            return Err(self.fail(format!(
                "image/mask length {}/{} does not match {}x{}",
                self.image.len(),
                self.mask.len(),
                self.width,
                self.height
            )));
        }
        if let Some(v) = self.image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(self.fail(format!("intensity {v} outside [0, 1]")));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(self.fail("lesion mask is empty"));
        }
        if self.gaze.len() < 2 {
            return Err(self.fail(format!("gaze plot needs at least 2 points, has {}", self.gaze.len())));
        }
        if let Some(g) = self.gaze.iter().find(|&&g| !self.contains(g)) {
            return Err(self.fail(format!("gaze point ({}, {}) outside image", g.x, g.y)));
        }
        Ok(())
    }

    /// Full validation: structure plus at least one fixation inside the lesion.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if self.lesion_visits() == 0 {
            return Err(self.fail("no gaze point falls inside the lesion"));
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.gaze.len() {
            return Err(Error::State(format!(
                "gaze index {index} out of range for case {} with {} points",
                self.case_id,
                self.gaze.len()
            )));
        }
        Ok(())
    }
}

/// Movement along the gaze plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Toward the last fixation.
    Anterograde,
    Still,
    /// Toward the first fixation.
    Retrograde,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Anterograde, Action::Still, Action::Retrograde];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Action::Anterograde => 0,
            Action::Still => 1,
            Action::Retrograde => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Reward for taking `effective` with the agent inside or outside the lesion.
pub fn reward(in_lesion: bool, effective: Action) -> f64 {
    match (in_lesion, effective) {
        (true, Action::Still) => 2.0,
        (false, Action::Still) => -4.0,
        (true, Action::Retrograde) => 0.5,
        (false, Action::Retrograde) => -1.5,
        (true, Action::Anterograde) => 0.5,
        (false, Action::Anterograde) => -0.5,
    }
}

/// Whether the fixation the agent sits on lies inside the lesion mask.
pub fn in_lesion(case: &GazeCase, index: usize) -> Result<bool> {
    case.check_index(index)?;
    Ok(case.mask_at(case.gaze[index]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_index: usize,
    pub reward: f64,
    /// `Still` whenever the requested move ran off either end of the plot.
    pub effective_action: Action,
}

/// Applies `action` at `index`. Moves past either end are clamped and
/// rewarded as staying still.
pub fn step(case: &GazeCase, index: usize, action: Action) -> Result<StepOutcome> {
    let inside = in_lesion(case, index)?;
    Ok(transition(inside, index, case.gaze.len(), action))
}

/// The move rule on a plot of `len` fixations, given lesion membership at `index`.
pub fn transition(inside: bool, index: usize, len: usize, action: Action) -> StepOutcome {
    let (next_index, effective_action) = match action {
        Action::Anterograde if index + 1 < len => (index + 1, Action::Anterograde),
        Action::Retrograde if index > 0 => (index - 1, Action::Retrograde),
        _ => (index, Action::Still),
    };
    StepOutcome {
        next_index,
        reward: reward(inside, effective_action),
        effective_action,
    }
}

/// Steps per episode: one per fixation.
pub fn episode_length(case: &GazeCase) -> usize {
    case.gaze.len()
}
