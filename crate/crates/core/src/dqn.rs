//! Deep Q-network training: ε-greedy interaction interleaved with one
//! replay-batch gradient step per environment step.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, render_into, Action, GazeCase, OverlayConfig};
use crate::error::{Error, Result};
use crate::eval::{self, argmax, QFunction};
use crate::nn::{glorot_init, Adam, Checkpoint, Network, NetworkConfig};
use crate::replay::{ReplayMemory, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_decay_per_episode: f64,
    pub epsilon_min: f64,
    pub learning_rate: f64,
    pub n_memory: usize,
    pub n_batch: usize,
    pub episodes: usize,
    pub agent_square: usize,
    pub overlay_alpha: f32,
    /// Episodes between accuracy samples.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 0.5,
            epsilon_decay_per_episode: 1e-4,
            epsilon_min: 1e-4,
            learning_rate: 1e-4,
            n_memory: 12_000,
            n_batch: 64,
            episodes: 300,
            agent_square: 11,
            overlay_alpha: 0.5,
            eval_every: 10,
            seed: 7,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return bad("need 0 <= epsilon_min <= epsilon_start <= 1");
        }
        if self.epsilon_decay_per_episode < 0.0 || self.learning_rate <= 0.0 {
            return bad("decay must be non-negative and learning rate positive");
        }
        if self.n_memory == 0 || self.n_batch == 0 || self.episodes == 0 || self.eval_every == 0 {
            return bad("memory, batch, episode and evaluation counts must be positive");
        }
        if self.agent_square == 0 || !(0.0..=1.0).contains(&self.overlay_alpha) {
            return bad("agent square must be positive and alpha in [0, 1]");
        }
        Ok(())
    }

    pub fn overlay(&self) -> OverlayConfig {
        OverlayConfig {
            alpha: self.overlay_alpha,
            square_size: self.agent_square,
        }
    }
}

/// Linear decay per episode, floored at `epsilon_min`.
pub fn epsilon_at(episode: usize, h: &Hyperparameters) -> f64 {
    (h.epsilon_start - episode as f64 * h.epsilon_decay_per_episode).max(h.epsilon_min)
}

/// Uniformly random action with probability `epsilon`, otherwise the argmax
/// (ties to the lowest index).
pub fn select_action<R: Rng>(q: &[f64; 3], epsilon: f64, rng: &mut R) -> Result<Action> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("Q-values {q:?}")));
    }
    let explore = rng.gen::<f64>() < epsilon;
    let i = if explore {
        rng.gen_range(0..Action::COUNT)
    } else {
        argmax(q)
    };
    Ok(Action::from_index(i).expect("index below action count"))
}

/// `r + γ · max_a Q(s', a)`.
pub fn bellman_target(reward: f64, gamma: f64, next_q: &[f64; 3]) -> f64 {
    reward + gamma * next_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean absolute error between targets and the Q-values of taken actions.
pub fn batch_loss(targets: &[f64], predicted: &[f64]) -> Result<f64> {
    if targets.len() != predicted.len() || targets.is_empty() {
        return Err(Error::Dimension {
            context: "batch loss",
            expected: targets.len(),
            actual: predicted.len(),
        });
    }
    let total: f64 = targets.iter().zip(predicted).map(|(t, p)| (t - p).abs()).sum();
    Ok(total / targets.len() as f64)
}

/// Q-network evaluated on rendered states.
#[derive(Debug, Clone)]
pub struct QNetwork {
    pub net: Network<f32>,
    pub overlay: OverlayConfig,
    pub seed: u64,
}

impl QNetwork {
    pub fn new(config: NetworkConfig, overlay: OverlayConfig, seed: u64) -> Result<Self> {
        let params = glorot_init(&config, seed)?;
        Ok(Self {
            net: Network::new(config, params)?,
            overlay,
            seed,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, overlay: OverlayConfig) -> Result<Self> {
        if ckpt.config.output_units != Action::COUNT {
            return Err(Error::Config("checkpoint is not a Q-network".into()));
        }
        Ok(Self {
            net: Network::new(ckpt.config, ckpt.params)?,
            overlay,
            seed: ckpt.seed,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.net.config().clone(),
            seed: self.seed,
            params: self.net.params().clone(),
        }
    }

    fn render_batch(&self, states: &[(&GazeCase, usize)]) -> Result<Vec<f32>> {
        let cfg = self.net.config();
        let per = cfg.input_len();
        let mut buf = vec![0.0f32; states.len() * per];
        for ((case, index), out) in states.iter().zip(buf.chunks_exact_mut(per)) {
            if (case.height, case.width) != (cfg.input_height, cfg.input_width) {
                return Err(Error::Dimension {
                    context: "case size vs network input",
                    expected: cfg.input_height * cfg.input_width,
                    actual: case.height * case.width,
                });
            }
            render_into(case, *index, &self.overlay, out)?;
        }
        Ok(buf)
    }

    pub fn q_values_batch(&self, states: &[(&GazeCase, usize)]) -> Result<Vec<[f64; 3]>> {
        let input = self.render_batch(states)?;
        let out = self.net.forward(&input, states.len())?;
        Ok(out
            .chunks_exact(3)
            .map(|q| [q[0] as f64, q[1] as f64, q[2] as f64])
            .collect())
    }
}

impl QFunction for QNetwork {
    fn q_values(&self, case: &GazeCase, index: usize) -> Result<[f64; 3]> {
        Ok(self.q_values_batch(&[(case, index)])?[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub case_id: String,
    pub score: f64,
    pub epsilon: f64,
    pub mean_batch_loss: f64,
    pub final_in_lesion: bool,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: usize,
}

impl TrainingLog {
    pub fn accuracy_samples(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter().filter(|e| e.test_accuracy.is_some())
    }

    /// Mean of the last `k` test-accuracy samples.
    pub fn mean_last_test_accuracy(&self, k: usize) -> Option<f64> {
        let acc: Vec<f64> = self.accuracy_samples().filter_map(|e| e.test_accuracy).collect();
        let tail = &acc[acc.len().saturating_sub(k)..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Columns: episode (1-based), score, epsilon, mean_batch_loss,
    /// train_acc and test_acc (blank except on sampling episodes).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "episode",
            "case_id",
            "score",
            "epsilon",
            "mean_batch_loss",
            "train_acc",
            "test_acc",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for e in &self.episodes {
            out.write_record([
                e.episode.to_string(),
                e.case_id.clone(),
                format!("{:.6}", e.score),
                format!("{:.6}", e.epsilon),
                format!("{:.6}", e.mean_batch_loss),
                opt(e.train_accuracy),
                opt(e.test_accuracy),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the full training loop. `on_episode` sees each finished episode and
/// the current network (e.g. for progress output or periodic checkpoints).
pub fn train<F>(
    train_cases: &[GazeCase],
    test_cases: &[GazeCase],
    h: &Hyperparameters,
    mut on_episode: F,
) -> Result<(QNetwork, TrainingLog)>
where
    F: FnMut(&EpisodeRecord, &QNetwork),
{
    h.validate()?;
    let first = train_cases
        .first()
        .ok_or_else(|| Error::Input("training set is empty".into()))?;
    for case in train_cases.iter().chain(test_cases) {
        case.validate()?;
        if (case.width, case.height) != (first.width, first.height) {
            return Err(Error::Validation {
                case_id: case.case_id.clone(),
                reason: format!(
                    "size {}x{} differs from {}x{}",
                    case.width, case.height, first.width, first.height
                ),
            });
        }
    }

    let config = NetworkConfig::q_network(first.height, first.width);
    let mut q = QNetwork::new(config, h.overlay(), h.seed)?;
    let mut adam = Adam::new(h.learning_rate);
    let mut memory = ReplayMemory::new(h.n_memory);
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    rng.set_stream(1);

    let mut log = TrainingLog::default();
    for episode in 0..h.episodes {
        let epsilon = epsilon_at(episode, h);
        let case_idx = rng.gen_range(0..train_cases.len());
        let case = &train_cases[case_idx];
        let steps = env::episode_length(case);
        let mut index = 0;
        let mut rewards = Vec::with_capacity(steps);
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let qv = q.q_values(case, index)?;
            let action = select_action(&qv, epsilon, &mut rng)?;
            let out = env::step(case, index, action)?;
            memory.push(Transition {
                case: case_idx,
                state: index,
                action,
                reward: out.reward,
                next_state: out.next_index,
            });
            loss_sum += learn_step(&mut q, &mut adam, &memory, train_cases, h, &mut rng)?;
            rewards.push(out.reward);
            index = out.next_index;
        }
        log.total_steps += steps;

        let mut record = EpisodeRecord {
            episode: episode + 1,
            case_id: case.case_id.clone(),
            score: eval::episode_score(&rewards, steps)?,
            epsilon,
            mean_batch_loss: loss_sum / steps as f64,
            final_in_lesion: env::in_lesion(case, index)?,
            train_accuracy: None,
            test_accuracy: None,
        };
        if (episode + 1) % h.eval_every == 0 {
            let window = h.eval_every - 1;
            let recent = &log.episodes[log.episodes.len() - window..];
            let hits = recent.iter().filter(|e| e.final_in_lesion).count() + record.final_in_lesion as usize;
            record.train_accuracy = Some(hits as f64 / h.eval_every as f64);
            if !test_cases.is_empty() {
                record.test_accuracy = Some(eval::test_accuracy(&q, test_cases)?.accuracy);
            }
        }
        on_episode(&record, &q);
        log.episodes.push(record);
    }
    Ok((q, log))
}

/// One gradient step on a replay batch. Returns the batch loss.
fn learn_step<R: Rng>(
    q: &mut QNetwork,
    adam: &mut Adam<f32>,
    memory: &ReplayMemory,
    cases: &[GazeCase],
    h: &Hyperparameters,
    rng: &mut R,
) -> Result<f64> {
    let batch = memory.sample_batch(h.n_batch, rng)?;
    let next: Vec<(&GazeCase, usize)> = batch.iter().map(|t| (&cases[t.case], t.next_state)).collect();
    let targets: Vec<f64> = q
        .q_values_batch(&next)?
        .iter()
        .zip(&batch)
        .map(|(nq, t)| bellman_target(t.reward, h.gamma, nq))
        .collect();

    let current: Vec<(&GazeCase, usize)> = batch.iter().map(|t| (&cases[t.case], t.state)).collect();
    let input = q.render_batch(&current)?;
    let out = q.net.forward_train(&input, batch.len())?;
    let predicted: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| out[i * 3 + t.action.index()] as f64)
        .collect();
    let loss = batch_loss(&targets, &predicted)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "batch loss {loss} after {} optimizer steps",
            adam.steps_taken()
        )));
    }
    // d|t - p|/dp on the taken action only
    let n = batch.len() as f64;
    let mut grad = vec![0.0f32; out.len()];
    for (i, t) in batch.iter().enumerate() {
        let diff = predicted[i] - targets[i];
        grad[i * 3 + t.action.index()] = (diff.signum() * (diff != 0.0) as u8 as f64 / n) as f32;
    }
    let grads = q.net.backward(&grad)?;
    adam.step(q.net.params_mut(), &grads)?;
    Ok(loss)
}
