//! Supervised keypoint baseline: the Q-network trunk with a two-unit sigmoid
//! head regressing the lesion bounding-box center.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{GazeCase, GazePoint};
use crate::error::{Error, Result};
use crate::nn::{glorot_init, Adam, Checkpoint, Head, Network, NetworkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdlConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_batch: usize,
    /// Relative rise of test loss over its running minimum that counts as divergence.
    pub divergence_ratio: f64,
    pub seed: u64,
}

impl Default for SdlConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-4,
            n_batch: 64,
            divergence_ratio: 0.2,
            seed: 7,
        }
    }
}

impl SdlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.n_batch == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.divergence_ratio.is_nan()
            || self.divergence_ratio < 0.0
        {
            return Err(Error::Config(
                "learning rate must be positive and divergence ratio non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Center of the bounding box of set pixels, in pixel coordinates.
pub fn bbox_center(mask: &[bool], width: usize, height: usize) -> Result<(f64, f64)> {
    if mask.len() != width * height {
        return Err(Error::Dimension {
            context: "mask",
            expected: width * height,
            actual: mask.len(),
        });
    }
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i % width, i / width);
        bounds = Some(match bounds {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    let (x0, x1, y0, y1) = bounds.ok_or_else(|| Error::Input("mask has no lesion pixels".into()))?;
    Ok(((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0))
}

/// Normalized bbox center `(u, v)` in the unit square.
pub fn keypoint_target(case: &GazeCase) -> Result<[f64; 2]> {
    let (x, y) = bbox_center(&case.mask, case.width, case.height)?;
    Ok([x / case.width as f64, y / case.height as f64])
}

/// Gray intensities replicated to three channels, no overlays.
pub fn plain_input(case: &GazeCase, out: &mut [f32]) {
    for (px, &g) in out.chunks_exact_mut(3).zip(&case.image) {
        px.fill(g);
    }
}

/// Mean absolute error over all coordinates.
pub fn keypoint_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(Error::Dimension {
            context: "keypoint loss",
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeypointPrediction {
    pub x: usize,
    pub y: usize,
    pub in_lesion: bool,
}

#[derive(Debug, Clone)]
pub struct KeypointNetwork {
    pub net: Network<f32>,
    pub seed: u64,
}

impl KeypointNetwork {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let params = glorot_init(&config, seed)?;
        Ok(Self {
            net: Network::new(config, params)?,
            seed,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.config.head != Head::Sigmoid || ckpt.config.output_units != 2 {
            return Err(Error::Config("checkpoint is not a keypoint network".into()));
        }
        Ok(Self {
            net: Network::new(ckpt.config, ckpt.params)?,
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

    fn inputs(&self, cases: &[&GazeCase]) -> Result<Vec<f32>> {
        let cfg = self.net.config();
        let per = cfg.input_len();
        let mut buf = vec![0.0f32; cases.len() * per];
        for (case, out) in cases.iter().zip(buf.chunks_exact_mut(per)) {
            if (case.height, case.width) != (cfg.input_height, cfg.input_width) {
                return Err(Error::Validation {
                    case_id: case.case_id.clone(),
                    reason: format!("size {}x{} does not match the network input", case.width, case.height),
                });
            }
            plain_input(case, out);
        }
        Ok(buf)
    }

    /// Raw `(u, v)` outputs per case.
    pub fn predict_normalized(&self, cases: &[&GazeCase]) -> Result<Vec<[f64; 2]>> {
        let out = self.net.forward(&self.inputs(cases)?, cases.len())?;
        Ok(out.chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect())
    }

    pub fn predict_keypoint(&self, case: &GazeCase) -> Result<KeypointPrediction> {
        let [u, v] = self.predict_normalized(&[case])?[0];
        Ok(to_pixel(case, u, v))
    }

    fn mean_loss(&self, cases: &[GazeCase]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in cases.chunks(64) {
            let refs: Vec<&GazeCase> = chunk.iter().collect();
            let pred = self.predict_normalized(&refs)?;
            for (p, case) in pred.iter().zip(chunk) {
                total += keypoint_loss(p, &keypoint_target(case)?)? * 2.0;
            }
        }
        Ok(total / (2 * cases.len()) as f64)
    }
}

/// Scales `(u, v)` to the image and rounds, staying inside the bounds.
pub fn to_pixel(case: &GazeCase, u: f64, v: f64) -> KeypointPrediction {
    let x = ((u * case.width as f64).round().max(0.0) as usize).min(case.width - 1);
    let y = ((v * case.height as f64).round().max(0.0) as usize).min(case.height - 1);
    KeypointPrediction {
        x,
        y,
        in_lesion: case.mask_at(GazePoint { x, y }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossLog {
    pub epochs: Vec<EpochLoss>,
}

impl LossLog {
    /// First epoch whose test loss exceeds `(1 + ratio)` times the lowest
    /// earlier test loss while train loss is still falling.
    pub fn divergence_epoch(&self, ratio: f64) -> Option<usize> {
        let mut best = f64::INFINITY;
        let mut prev_train = f64::INFINITY;
        for e in &self.epochs {
            let test = e.test_loss?;
            if test > best * (1.0 + ratio) && e.train_loss < prev_train {
                return Some(e.epoch);
            }
            best = best.min(test);
            prev_train = e.train_loss;
        }
        None
    }

    /// Columns: epoch (1-based), train_loss, test_loss.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "test_loss"])?;
        for e in &self.epochs {
            out.write_record([
                e.epoch.to_string(),
                format!("{:.6}", e.train_loss),
                e.test_loss.map(|t| format!("{t:.6}")).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdlReport {
    pub predictions: Vec<(String, KeypointPrediction)>,
    pub true_positives: usize,
    pub accuracy: f64,
}

impl SdlReport {
    /// Columns: case_id, x, y, in_lesion.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["case_id", "x", "y", "in_lesion"])?;
        for (id, p) in &self.predictions {
            out.write_record([id.clone(), p.x.to_string(), p.y.to_string(), p.in_lesion.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn sdl_accuracy(model: &KeypointNetwork, cases: &[GazeCase]) -> Result<SdlReport> {
    if cases.is_empty() {
        return Err(Error::Input("no cases to evaluate".into()));
    }
    let predictions = cases
        .iter()
        .map(|c| Ok((c.case_id.clone(), model.predict_keypoint(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let true_positives = predictions.iter().filter(|(_, p)| p.in_lesion).count();
    Ok(SdlReport {
        accuracy: true_positives as f64 / cases.len() as f64,
        predictions,
        true_positives,
    })
}

/// Mini-batch MAE regression of the bbox center. Train and test loss are
/// measured on the full sets after every epoch.
pub fn train_supervised<F>(
    train_cases: &[GazeCase],
    test_cases: &[GazeCase],
    cfg: &SdlConfig,
    mut on_epoch: F,
) -> Result<(KeypointNetwork, LossLog)>
where
    F: FnMut(&EpochLoss),
{
    cfg.validate()?;
    let first = train_cases
        .first()
        .ok_or_else(|| Error::Input("training set is empty".into()))?;
    let targets = train_cases.iter().map(keypoint_target).collect::<Result<Vec<_>>>()?;
    for case in test_cases {
        keypoint_target(case)?;
    }
    let mut model = KeypointNetwork::new(NetworkConfig::keypoint_network(first.height, first.width), cfg.seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..train_cases.len()).collect();
    let mut log = LossLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.n_batch) {
            let cases: Vec<&GazeCase> = batch.iter().map(|&i| &train_cases[i]).collect();
            let input = model.inputs(&cases)?;
            let out = model.net.forward_train(&input, batch.len())?;
            let n = out.len() as f64;
            let mut grad = vec![0.0f32; out.len()];
            let mut loss = 0.0;
            for (k, &i) in batch.iter().enumerate() {
                for c in 0..2 {
                    let diff = out[2 * k + c] as f64 - targets[i][c];
                    loss += diff.abs();
                    grad[2 * k + c] = (diff.signum() * (diff != 0.0) as u8 as f64 / n) as f32;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("keypoint loss {loss} at epoch {epoch}")));
            }
            let grads = model.net.backward(&grad)?;
            adam.step(model.net.params_mut(), &grads)?;
        }
        let record = EpochLoss {
            epoch,
            train_loss: model.mean_loss(train_cases)?,
            test_loss: if test_cases.is_empty() {
                None
            } else {
                Some(model.mean_loss(test_cases)?)
            },
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok((model, log))
}
