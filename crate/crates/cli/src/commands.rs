use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gazeloc::data::{generate_dataset, load_dataset, save_dataset, split_dataset, DatasetSplit};
use gazeloc::dqn::{self, QNetwork, TrainingLog};
use gazeloc::env::GazeCase;
use gazeloc::eval::{compare_methods, test_accuracy, EvaluationReport};
use gazeloc::nn::{Checkpoint, Head};
use gazeloc::sdl::{self, sdl_accuracy, KeypointNetwork, LossLog, SdlReport};
use gazeloc::Result;
use serde::Serialize;

use crate::plot::{bar_chart, line_panels, Panel, Series};
use crate::settings::FileConfig;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn out_subdir(cfg: &FileConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir().join(name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_split(cfg: &FileConfig, seed: u64) -> Result<DatasetSplit> {
    let dir = cfg.data_dir();
    let cases = load_dataset(&dir, cfg.strictness())?;
    let (train_n, test_n) = cfg.split_sizes();
    let split = split_dataset(&cases, train_n, test_n, seed)?;
    eprintln!(
        "loaded {} cases from {}; {} train / {} test",
        cases.len(),
        dir.display(),
        split.train.len(),
        split.test.len()
    );
    Ok(split)
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    data_dir: PathBuf,
    settings: T,
    outputs: Vec<&'a str>,
}

pub fn gen_data(cfg: &FileConfig, seed: u64) -> Result<()> {
    let synth = cfg.synth();
    let n = cfg.n_cases.unwrap_or(100);
    let cases = generate_dataset(&synth, n, seed)?;
    let dir = cfg.data_dir();
    let manifest = save_dataset(&dir, &cases)?;
    let visits: usize = cases.iter().map(GazeCase::lesion_visits).sum();
    println!(
        "wrote {} cases ({}x{}, {} fixations each, {:.1} lesion fixations on average) to {}",
        manifest.cases.len(),
        synth.width,
        synth.height,
        synth.gaze_len,
        visits as f64 / n as f64,
        dir.display()
    );
    Ok(())
}

pub fn train_rl(cfg: &FileConfig, seed: u64) -> Result<()> {
    let h = cfg.hyperparameters(seed);
    h.validate()?;
    let split = load_split(cfg, seed)?;
    let dir = out_subdir(cfg, "rl")?;
    let every = cfg.checkpoint_every.unwrap_or(0);
    let start = Instant::now();
    let mut save_err = None;
    let (q, log) = dqn::train(&split.train, &split.test, &h, |rec, q| {
        if let (Some(tr), Some(te)) = (rec.train_accuracy, rec.test_accuracy) {
            eprintln!(
                "episode {:>4}  score {:>7.3}  eps {:.4}  loss {:.4}  train acc {tr:.2}  test acc {te:.3}  [{:.0}s]",
                rec.episode,
                rec.score,
                rec.epsilon,
                rec.mean_batch_loss,
                start.elapsed().as_secs_f64()
            );
        }
        if every > 0 && rec.episode % every == 0 && save_err.is_none() {
            let path = dir.join(format!("q_network_ep{:04}.ckpt", rec.episode));
            save_err = q.checkpoint().save(path).err();
        }
    })?;
    if let Some(e) = save_err {
        return Err(e);
    }
    let mut w = create(&dir.join("training_log.csv"))?;
    log.write_csv(&mut w)?;
    w.flush()?;
    q.checkpoint().save(dir.join("q_network.ckpt"))?;
    write_text(&dir.join("learning_curves.svg"), &rl_plot(&log))?;
    let report = test_accuracy(&q, &split.test)?;
    let mut w = create(&dir.join("test_eval.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &dir.join("run.json"),
        &RunManifest {
            command: "train-rl",
            seed,
            data_dir: cfg.data_dir(),
            settings: &h,
            outputs: vec![
                "training_log.csv",
                "q_network.ckpt",
                "learning_curves.svg",
                "test_eval.csv",
            ],
        },
    )?;
    let tail = log.mean_last_test_accuracy(10).unwrap_or(f64::NAN);
    println!(
        "trained {} episodes ({} steps) in {:.1}s; final test {}; mean of last 10 test accuracies {tail:.4}",
        log.episodes.len(),
        log.total_steps,
        start.elapsed().as_secs_f64(),
        report.summary()
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

fn rl_plot(log: &TrainingLog) -> String {
    let score = log.episodes.iter().map(|e| (e.episode as f64, e.score)).collect();
    let acc = |f: fn(&dqn::EpisodeRecord) -> Option<f64>| {
        log.episodes
            .iter()
            .filter_map(|e| f(e).map(|a| (e.episode as f64, a)))
            .collect::<Vec<_>>()
    };
    line_panels(&[
        Panel {
            title: "Episode score",
            x_label: "episode",
            series: vec![Series {
                label: "score",
                points: score,
            }],
            marker: None,
        },
        Panel {
            title: "Accuracy",
            x_label: "episode",
            series: vec![
                Series {
                    label: "train",
                    points: acc(|e| e.train_accuracy),
                },
                Series {
                    label: "test",
                    points: acc(|e| e.test_accuracy),
                },
            ],
            marker: None,
        },
    ])
}

pub fn train_sdl(cfg: &FileConfig, seed: u64) -> Result<()> {
    let sc = cfg.sdl(seed);
    sc.validate()?;
    let split = load_split(cfg, seed)?;
    let dir = out_subdir(cfg, "sdl")?;
    let start = Instant::now();
    let (model, log) = sdl::train_supervised(&split.train, &split.test, &sc, |e| {
        if e.epoch % 10 == 0 || e.epoch == 1 {
            eprintln!(
                "epoch {:>4}  train loss {:.5}  test loss {:.5}  [{:.0}s]",
                e.epoch,
                e.train_loss,
                e.test_loss.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    let mut w = create(&dir.join("loss_log.csv"))?;
    log.write_csv(&mut w)?;
    w.flush()?;
    model.checkpoint().save(dir.join("keypoint.ckpt"))?;
    let divergence = log.divergence_epoch(sc.divergence_ratio);
    write_text(&dir.join("loss_curves.svg"), &sdl_plot(&log, divergence))?;
    let report = sdl_accuracy(&model, &split.test)?;
    let mut w = create(&dir.join("test_eval.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let summary = format!(
        "divergence_epoch: {}\ntest_accuracy: {:.4} ({}/{})\n",
        divergence.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
        report.accuracy,
        report.true_positives,
        split.test.len()
    );
    write_text(&dir.join("summary.txt"), &summary)?;
    write_json(
        &dir.join("run.json"),
        &RunManifest {
            command: "train-sdl",
            seed,
            data_dir: cfg.data_dir(),
            settings: &sc,
            outputs: vec![
                "loss_log.csv",
                "keypoint.ckpt",
                "loss_curves.svg",
                "test_eval.csv",
                "summary.txt",
            ],
        },
    )?;
    print!("{summary}");
    println!("outputs in {}", dir.display());
    Ok(())
}

fn sdl_plot(log: &LossLog, divergence: Option<usize>) -> String {
    let train = log.epochs.iter().map(|e| (e.epoch as f64, e.train_loss)).collect();
    let test = log
        .epochs
        .iter()
        .filter_map(|e| e.test_loss.map(|t| (e.epoch as f64, t)))
        .collect();
    line_panels(&[Panel {
        title: "Keypoint regression loss (MAE)",
        x_label: "epoch",
        series: vec![
            Series {
                label: "train",
                points: train,
            },
            Series {
                label: "test",
                points: test,
            },
        ],
        marker: divergence.map(|e| (e as f64, "divergence")),
    }])
}

enum Model {
    Q(QNetwork),
    Keypoint(KeypointNetwork),
}

fn load_model(cfg: &FileConfig, seed: u64, path: &Path) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    match ckpt.config.head {
        Head::Linear => Ok(Model::Q(QNetwork::from_checkpoint(
            ckpt,
            cfg.hyperparameters(seed).overlay(),
        )?)),
        Head::Sigmoid => Ok(Model::Keypoint(KeypointNetwork::from_checkpoint(ckpt)?)),
    }
}

enum Report {
    Rl(EvaluationReport),
    Sdl(SdlReport),
}

impl Report {
    fn true_positives(&self) -> usize {
        match self {
            Report::Rl(r) => r.true_positives,
            Report::Sdl(r) => r.true_positives,
        }
    }
}

fn evaluate(model: &Model, cases: &[GazeCase]) -> Result<Report> {
    match model {
        Model::Q(q) => Ok(Report::Rl(test_accuracy(q, cases)?)),
        Model::Keypoint(k) => Ok(Report::Sdl(sdl_accuracy(k, cases)?)),
    }
}

pub fn eval(cfg: &FileConfig, seed: u64, checkpoint: &Path) -> Result<()> {
    let model = load_model(cfg, seed, checkpoint)?;
    let split = load_split(cfg, seed)?;
    let dir = out_subdir(cfg, "eval")?;
    let report = evaluate(&model, &split.test)?;
    let (name, summary) = match &report {
        Report::Rl(r) => {
            let mut w = create(&dir.join("rl_eval.csv"))?;
            r.write_csv(&mut w)?;
            w.flush()?;
            ("rl_eval.csv", r.summary())
        }
        Report::Sdl(r) => {
            let mut w = create(&dir.join("sdl_eval.csv"))?;
            r.write_csv(&mut w)?;
            w.flush()?;
            (
                "sdl_eval.csv",
                format!("accuracy {:.4} ({}/{})", r.accuracy, r.true_positives, split.test.len()),
            )
        }
    };
    println!("{summary}");
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

pub fn compare(cfg: &FileConfig, seed: u64, rl: &Path, sdl: &Path) -> Result<()> {
    let (rl_model, sdl_model) = (load_model(cfg, seed, rl)?, load_model(cfg, seed, sdl)?);
    let split = load_split(cfg, seed)?;
    let n = split.test.len();
    let rl_tp = evaluate(&rl_model, &split.test)?.true_positives();
    let sdl_tp = evaluate(&sdl_model, &split.test)?.true_positives();
    let result = compare_methods(rl_tp, sdl_tp, n)?;
    if !matches!(rl_model, Model::Q(_)) || !matches!(sdl_model, Model::Keypoint(_)) {
        eprintln!("note: checkpoint kinds differ from the usual (Q-network, keypoint) pairing");
    }

    let dir = out_subdir(cfg, "compare")?;
    let mut w = create(&dir.join("accuracy.csv"))?;
    writeln!(w, "method,true_positives,cases,accuracy")?;
    writeln!(w, "dqn,{rl_tp},{n},{:.6}", result.rl_accuracy_mean)?;
    writeln!(w, "sdl,{sdl_tp},{n},{:.6}", result.sdl_accuracy_mean)?;
    w.flush()?;
    let mut w = create(&dir.join("significance.csv"))?;
    writeln!(w, "test,z,p_value")?;
    writeln!(w, "{},{:.6},{:.6e}", result.test_name, result.z, result.p_value)?;
    w.flush()?;
    write_text(
        &dir.join("accuracy.svg"),
        &bar_chart(
            "Test accuracy",
            &[("dqn", result.rl_accuracy_mean), ("sdl", result.sdl_accuracy_mean)],
        ),
    )?;
    println!(
        "dqn {:.4} ({rl_tp}/{n}) vs sdl {:.4} ({sdl_tp}/{n}); {}: z = {:.4}, p = {:.3e}",
        result.rl_accuracy_mean, result.sdl_accuracy_mean, result.test_name, result.z, result.p_value
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
