//! Exact tabular solvers on gaze-chain MDPs, used as ground truth for the DQN.

use std::io::Write;

use rand::Rng;

use crate::env::{self, transition, Action, GazeCase, GazePoint};
use crate::error::{Error, Result};
use crate::eval::argmax;

/// A gaze plot reduced to its lesion-membership flags. Transitions are the
/// deterministic clamped moves of the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    pub in_lesion: Vec<bool>,
    pub gamma: f64,
}

impl TabularMDP {
    pub fn chain(in_lesion: Vec<bool>, gamma: f64) -> Result<Self> {
        if in_lesion.is_empty() {
            return Err(Error::Input("chain needs at least one state".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self { in_lesion, gamma })
    }

    pub fn from_case(case: &GazeCase, gamma: f64) -> Result<Self> {
        let flags = (0..case.gaze.len())
            .map(|i| env::in_lesion(case, i))
            .collect::<Result<Vec<_>>>()?;
        Self::chain(flags, gamma)
    }

    pub fn len(&self) -> usize {
        self.in_lesion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_lesion.is_empty()
    }

    /// `(next state, reward)`.
    pub fn step(&self, state: usize, action: Action) -> (usize, f64) {
        let out = transition(self.in_lesion[state], state, self.len(), action);
        (out.next_index, out.reward)
    }
}

/// A square image whose fixations sit evenly spaced along the middle row.
/// Fixations flagged in `mdp.in_lesion` get a small bright disk as lesion.
pub fn chain_case(mdp: &TabularMDP, size: usize) -> Result<GazeCase> {
    let n = mdp.len();
    if size < 2 * n + 1 {
        return Err(Error::Config(format!("{size} px is too small for {n} fixations")));
    }
    let spacing = size / (n + 1);
    let row = size / 2;
    let gaze: Vec<GazePoint> = (0..n).map(|i| GazePoint::new(spacing * (i + 1), row)).collect();
    let radius = (spacing as f64 / 2.0 - 0.5).clamp(0.0, 3.0);
    let mut mask = vec![false; size * size];
    let mut image = vec![0.3f32; size * size];
    for (g, _) in gaze.iter().zip(&mdp.in_lesion).filter(|(_, &inside)| inside) {
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - g.x as f64, y as f64 - g.y as f64);
                if dx * dx + dy * dy <= radius * radius {
                    mask[y * size + x] = true;
                    image[y * size + x] = 0.8;
                }
            }
        }
    }
    Ok(GazeCase {
        case_id: "chain".into(),
        width: size,
        height: size,
        image,
        mask,
        gaze,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; 3]>,
}

impl QTable {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![[0.0; 3]; n],
        }
    }

    pub fn get(&self, state: usize, action: Action) -> f64 {
        self.values[state][action.index()]
    }

    pub fn state_value(&self, state: usize) -> f64 {
        self.values[state].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax per state, ties to the lowest action index.
    pub fn greedy_policy(&self) -> Vec<Action> {
        self.values
            .iter()
            .map(|q| Action::from_index(argmax(q)).expect("three actions"))
            .collect()
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Columns: state, anterograde, still, retrograde.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["state", "anterograde", "still", "retrograde"])?;
        for (s, q) in self.values.iter().enumerate() {
            out.write_record([s.to_string(), q[0].to_string(), q[1].to_string(), q[2].to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One synchronous sweep of `Q(s,a) = r(s,a) + γ max_a' Q(s',a')`.
pub fn bellman_backup(mdp: &TabularMDP, q: &QTable) -> QTable {
    let values = (0..mdp.len())
        .map(|s| {
            Action::ALL.map(|a| {
                let (next, r) = mdp.step(s, a);
                r + mdp.gamma * q.state_value(next)
            })
        })
        .collect();
    QTable { values }
}

/// Sweeps from zero until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &TabularMDP, tol: f64) -> Result<QTable> {
    if mdp.gamma >= 1.0 {
        return Err(Error::Divergence(format!("gamma {} must be below 1", mdp.gamma)));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let mut q = QTable::zeros(mdp.len());
    loop {
        let next = bellman_backup(mdp, &q);
        let delta = next.sup_distance(&q);
        q = next;
        if delta < tol {
            return Ok(q);
        }
    }
}

/// Tabular Q-learning over ε-greedy episodes of `mdp.len()` steps. Episode
/// `e` starts at state `e mod N` so every state gets visited; `epsilon(e)`
/// gives its exploration rate.
pub fn q_learning_tabular<R, E>(
    mdp: &TabularMDP,
    alpha: f64,
    episodes: usize,
    epsilon: E,
    rng: &mut R,
) -> Result<QTable>
where
    R: Rng,
    E: Fn(usize) -> f64,
{
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut q = QTable::zeros(mdp.len());
    for e in 0..episodes {
        let eps = epsilon(e);
        let mut s = e % mdp.len();
        for _ in 0..mdp.len() {
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..Action::COUNT)
            } else {
                argmax(&q.values[s])
            };
            let (next, r) = mdp.step(s, Action::ALL[a]);
            let target = r + mdp.gamma * q.state_value(next);
            q.values[s][a] += alpha * (target - q.values[s][a]);
            s = next;
        }
    }
    Ok(q)
}
