//! Greedy rollouts, episode metrics, and the RL-versus-baseline comparison.

use std::io::Write;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::env::{self, Action, GazeCase};
use crate::error::{Error, Result};

/// Anything that scores the three actions at a gaze index of a case.
pub trait QFunction {
    fn q_values(&self, case: &GazeCase, index: usize) -> Result<[f64; 3]>;
}

/// Numerically stable softmax.
pub fn softmax(q: &[f64]) -> Vec<f64> {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Action picked on-policy: argmax of the softmax of the Q-values.
pub fn greedy_action(q: &[f64; 3]) -> Action {
    Action::from_index(argmax(&softmax(q))).expect("three actions")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub final_index: usize,
    pub rewards: Vec<f64>,
}

/// Acts greedily for `N_gaze` steps from the first fixation.
pub fn greedy_rollout<Q: QFunction + ?Sized>(q: &Q, case: &GazeCase) -> Result<Rollout> {
    let steps = env::episode_length(case);
    let mut index = 0;
    let mut rewards = Vec::with_capacity(steps);
    while rewards.len() < steps {
        let action = greedy_action(&q.q_values(case, index)?);
        let out = env::step(case, index, action)?;
        rewards.push(out.reward);
        if out.next_index == index {
            // the state is unchanged, so every remaining step repeats this one
            rewards.resize(steps, out.reward);
        }
        index = out.next_index;
    }
    Ok(Rollout {
        final_index: index,
        rewards,
    })
}

/// Mean reward of an episode.
pub fn episode_score(rewards: &[f64], n_gaze: usize) -> Result<f64> {
    if rewards.len() != n_gaze || n_gaze == 0 {
        return Err(Error::Dimension {
            context: "episode rewards",
            expected: n_gaze,
            actual: rewards.len(),
        });
    }
    Ok(rewards.iter().sum::<f64>() / n_gaze as f64)
}

pub fn accuracy(true_positives: usize, total: usize) -> Result<f64> {
    if total == 0 || true_positives > total {
        return Err(Error::Input(format!(
            "accuracy needs 0 <= TP <= n and n > 0, got {true_positives}/{total}"
        )));
    }
    Ok(true_positives as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub final_index: usize,
    pub in_lesion: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub outcomes: Vec<CaseOutcome>,
    pub true_positives: usize,
    pub accuracy: f64,
    pub mean_score: f64,
}

impl EvaluationReport {
    pub fn from_outcomes(outcomes: Vec<CaseOutcome>) -> Result<Self> {
        let tp = outcomes.iter().filter(|o| o.in_lesion).count();
        let acc = accuracy(tp, outcomes.len())?;
        let mean_score = outcomes.iter().map(|o| o.score).sum::<f64>() / outcomes.len() as f64;
        Ok(Self {
            outcomes,
            true_positives: tp,
            accuracy: acc,
            mean_score,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["case_id", "final_index", "in_lesion", "score"])?;
        for o in &self.outcomes {
            out.write_record([
                o.case_id.clone(),
                o.final_index.to_string(),
                o.in_lesion.to_string(),
                format!("{:.6}", o.score),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "accuracy {:.4} ({}/{}), mean score {:.4}",
            self.accuracy,
            self.true_positives,
            self.outcomes.len(),
            self.mean_score
        )
    }
}

/// Greedy rollout on every case; a true positive ends inside the lesion.
pub fn test_accuracy<Q: QFunction + ?Sized>(q: &Q, cases: &[GazeCase]) -> Result<EvaluationReport> {
    if cases.is_empty() {
        return Err(Error::Input("no cases to evaluate".into()));
    }
    let outcomes = cases
        .iter()
        .map(|case| {
            let r = greedy_rollout(q, case)?;
            Ok(CaseOutcome {
                case_id: case.case_id.clone(),
                final_index: r.final_index,
                in_lesion: env::in_lesion(case, r.final_index)?,
                score: episode_score(&r.rewards, env::episode_length(case))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_outcomes(outcomes)
}

pub const TWO_PROPORTION_Z: &str = "two-proportion z-test (pooled, two-sided)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub rl_accuracy_mean: f64,
    pub sdl_accuracy_mean: f64,
    pub z: f64,
    pub p_value: f64,
    pub test_name: String,
}

/// Pooled two-proportion z-test of `rl_tp / n` against `sdl_tp / n`.
pub fn compare_methods(rl_tp: usize, sdl_tp: usize, n: usize) -> Result<ComparisonResult> {
    if n == 0 {
        return Err(Error::Input("comparison needs at least one case".into()));
    }
    let (p1, p2) = (accuracy(rl_tp, n)?, accuracy(sdl_tp, n)?);
    let pooled = (rl_tp + sdl_tp) as f64 / (2 * n) as f64;
    let se = (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    let (z, p_value) = if rl_tp == sdl_tp || se == 0.0 {
        (0.0, 1.0)
    } else {
        let z = (p1 - p2) / se;
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
    };
    Ok(ComparisonResult {
        rl_accuracy_mean: p1,
        sdl_accuracy_mean: p2,
        z,
        p_value,
        test_name: TWO_PROPORTION_Z.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::chain_case;
    use proptest::prelude::*;

    struct Constant(Action);

    impl QFunction for Constant {
        fn q_values(&self, _: &GazeCase, _: usize) -> Result<[f64; 3]> {
            let mut q = [0.0; 3];
            q[self.0.index()] = 1.0;
            Ok(q)
        }
    }

    /// Moves forward until inside the lesion, then stays.
    struct Oracle;

    impl QFunction for Oracle {
        fn q_values(&self, case: &GazeCase, index: usize) -> Result<[f64; 3]> {
            Ok(if env::in_lesion(case, index)? {
                [0.0, 1.0, 0.0]
            } else {
                [1.0, 0.0, 0.0]
            })
        }
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(softmax(&[1.0, 1.0, 1.0]), softmax(&[0.0, 0.0, 0.0]));
        assert_eq!(argmax(&softmax(&[3.0, 1.0, 2.0])), 0);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
    }

    #[test]
    fn rollout_fixed_points() {
        let case = chain_case(5, &[3]);
        assert_eq!(greedy_rollout(&Constant(Action::Still), &case).unwrap().final_index, 0);
        let fwd = greedy_rollout(&Constant(Action::Anterograde), &case).unwrap();
        assert_eq!(fwd.final_index, 4);
        assert_eq!(fwd.rewards, vec![-0.5, -0.5, -0.5, 0.5, -4.0]);
        let best = greedy_rollout(&Oracle, &case).unwrap();
        assert_eq!(best.final_index, 3);
        assert_eq!(best.rewards, vec![-0.5, -0.5, -0.5, 2.0, 2.0]);
    }

    #[test]
    fn scores() {
        assert_eq!(episode_score(&[2.0; 7], 7).unwrap(), 2.0);
        assert_eq!(episode_score(&[2.0, -4.0], 2).unwrap(), -1.0);
        assert_eq!(episode_score(&[-4.0; 5], 5).unwrap(), -4.0);
        assert!(episode_score(&[1.0], 2).is_err());
    }

    #[test]
    fn accuracy_and_report() {
        assert_eq!(accuracy(8, 10).unwrap(), 0.8);
        assert_eq!(accuracy(30, 30).unwrap(), 1.0);
        assert!(accuracy(1, 0).is_err());
        let cases: Vec<_> = (0..4).map(|i| chain_case(5, &[i])).collect();
        let report = test_accuracy(&Oracle, &cases).unwrap();
        assert_eq!(report.accuracy, 1.0);
        let report = test_accuracy(&Constant(Action::Still), &cases).unwrap();
        assert_eq!(report.true_positives, 1);
        assert_eq!(report.accuracy, 0.25);
    }

    // Frozen with scipy: z = (p1 - p2) / sqrt(p(1-p)(2/n)), p = 2 * norm.sf(|z|)
    #[test]
    fn z_test_against_reference_values() {
        let same = compare_methods(12, 12, 30).unwrap();
        assert_eq!(same.p_value, 1.0);
        let r = compare_methods(26, 2, 30).unwrap();
        assert!((r.z - 6.210_590_034_081_188).abs() < 1e-9, "{}", r.z);
        assert!(
            (r.p_value / 5.278_602_213_538_74e-10 - 1.0).abs() < 1e-9,
            "{}",
            r.p_value
        );
        let r = compare_methods(30, 0, 30).unwrap();
        assert!((r.z - 7.745_966_692_414_835).abs() < 1e-9);
        assert!((r.p_value / 9.485_737_571_073_745e-15 - 1.0).abs() < 1e-6);
        assert!(r.p_value < 1e-10);
        assert!(compare_methods(1, 1, 0).is_err());
        assert!(compare_methods(31, 1, 30).is_err());
    }

    proptest! {
        #[test]
        fn softmax_invariants(q in proptest::array::uniform3(-50.0f64..50.0), shift in -20.0f64..20.0) {
            let s = softmax(&q);
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(argmax(&s), argmax(&q));
            let shifted: Vec<f64> = q.iter().map(|v| v + shift).collect();
            for (a, b) in s.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
