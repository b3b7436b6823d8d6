use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use statdec::autoencoder::reconstruction_loss;
use statdec::checkpoint::{encode_checkpoint, load_checkpoint, Checkpoint, CheckpointMeta};
use statdec::clustering::{assign_labels, soft_assign};
use statdec::data::{
    class_counts, load_csv, load_idx, make_imbalanced, parse_idx, write_csv, write_idx, ImbalanceManifest,
    IDX_LABELS_MAGIC,
};
use statdec::{ari, clustering_accuracy, nmi, pretrain, train_from, Dataset, Error, ImbalanceSpec, Matrix, Rng};

use crate::args::{DataArgs, EvalArgs, ImbalanceArgs, PretrainArgs, TrainArgs};
use crate::report::{line_chart, sha256_hex, DatasetInfo, RunDir};
use crate::CliError;

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if bytes.len() >= 4 && u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == IDX_LABELS_MAGIC {
        let (_, payload) = parse_idx(&bytes, IDX_LABELS_MAGIC).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        return Ok(payload.iter().map(|&b| b as usize).collect());
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::input(format!("{}: not text or IDX", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::input(format!("{}:{}: bad label {l:?}", path.display(), i + 1)))
        })
        .collect()
}

fn load_data(args: &DataArgs) -> Result<(Dataset<f64>, DatasetInfo), CliError> {
    let path = &args.data;
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut ds: Dataset<f64> = if is_csv(path) {
        load_csv(path, args.label_column.as_deref(), !args.no_scale)?
    } else {
        load_idx(path, None)?
    };
    if let Some(lp) = &args.labels {
        let labels = read_labels(lp)?;
        if labels.len() != ds.len() {
            return Err(CliError::input(format!(
                "{} has {} labels for {} samples",
                lp.display(),
                labels.len(),
                ds.len()
            )));
        }
        ds.meta.class_counts = class_counts(&labels);
        ds.labels = Some(labels);
    }
    let info = DatasetInfo {
        path: path.display().to_string(),
        labels: args.labels.as_ref().map(|p| p.display().to_string()),
        n: ds.len(),
        dim: ds.dim(),
        sha256: sha256_hex(&bytes),
    };
    Ok((ds, info))
}

fn check_width(expected: usize, ds: &Dataset<f64>) -> Result<(), CliError> {
    if expected != ds.dim() {
        return Err(CliError::input(format!(
            "dataset has {} features per sample but the model expects {expected}",
            ds.dim()
        )));
    }
    Ok(())
}

fn matrix_csv(m: &Matrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn labels_txt(labels: &[usize]) -> String {
    labels.iter().fold(String::new(), |mut s, l| {
        let _ = writeln!(s, "{l}");
        s
    })
}

#[derive(serde::Serialize)]
struct Metrics {
    acc: f64,
    nmi: f64,
    ari: f64,
    n: usize,
    k: usize,
    seed: u64,
}

fn score(pred: &[usize], truth: &[usize], k: usize, seed: u64) -> Result<Metrics, CliError> {
    Ok(Metrics {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
        n: pred.len(),
        k,
        seed,
    })
}

fn print_metrics(m: &Metrics) {
    println!("ACC {:.4}  NMI {:.4}  ARI {:.4}", m.acc, m.nmi, m.ari);
}

fn write_checkpoint(run: &mut RunDir, name: &str, ckpt: &Checkpoint<f64>, seed: u64, iterations: usize) -> Result<(), CliError> {
    run.write(&format!("{name}.ckpt"), &encode_checkpoint(ckpt))?;
    let meta = CheckpointMeta::describe(ckpt, seed, iterations);
    run.write(&format!("{name}.json"), &serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
    Ok(())
}

pub fn pretrain_cmd(args: &PretrainArgs) -> Result<(), CliError> {
    let config = args.config.resolve().map_err(CliError::input)?;
    let (ds, info) = load_data(&args.data)?;
    let seed = args.config.seed;
    let mut run = RunDir::create(&args.out, "pretrain", seed)?;
    let start = Instant::now();
    let ae = pretrain(&config, &ds.x, &mut Rng::new(seed).derive(1))?;
    run.time("pretrain", start.elapsed());
    let z = ae.embed(&ds.x)?;
    let lr = reconstruction_loss(&ds.x, &ae.decode(&z, None)?.0)?;
    if !lr.is_finite() {
        return Err(Error::Divergence {
            iteration: config.scaled(config.finetune_iters),
        }
        .into());
    }
    let iterations = config.scaled(config.pretrain_iters) * ae.encoder.depth() + config.scaled(config.finetune_iters);
    write_checkpoint(&mut run, "autoencoder", &Checkpoint { autoencoder: ae, centroids: None }, seed, iterations)?;
    println!("final Lr {lr}");
    run.manifest.config = Some(config);
    run.manifest.dataset = info;
    run.manifest.metrics = Some(serde_json::json!({ "lr": lr }));
    run.finish()
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let config = args.config.resolve().map_err(CliError::input)?;
    let (ds, info) = load_data(&args.data)?;
    if config.k > ds.len() {
        return Err(CliError::input(format!("k = {} exceeds the {} samples", config.k, ds.len())));
    }
    let seed = args.config.seed;
    let rng = Rng::new(seed);
    let mut run = RunDir::create(&args.out, "train", seed)?;
    let ae = match &args.checkpoint {
        Some(path) => {
            let ckpt: Checkpoint<f64> = load_checkpoint(path)?;
            check_width(ckpt.autoencoder.input_width(), &ds)?;
            run.manifest.artifacts.insert("input.ckpt".into(), sha256_hex(&fs::read(path).unwrap_or_default()));
            ckpt.autoencoder
        }
        None => {
            let start = Instant::now();
            let ae = pretrain(&config, &ds.x, &mut rng.derive(1))?;
            run.time("pretrain", start.elapsed());
            ae
        }
    };
    let start = Instant::now();
    let out = train_from(&config, ae, &ds.x, &rng)?;
    run.time("train", start.elapsed());

    let ckpt = Checkpoint {
        autoencoder: out.autoencoder,
        centroids: Some(out.state.centroids.clone()),
    };
    write_checkpoint(&mut run, "model", &ckpt, seed, out.history.len())?;
    run.write("labels.txt", labels_txt(&out.labels).as_bytes())?;
    run.write("embeddings.csv", matrix_csv(&out.embeddings).as_bytes())?;
    run.write("history.csv", out.history.to_csv().as_bytes())?;
    if !args.no_charts {
        let recs = &out.history.records;
        let pick = |f: fn(&statdec::trainer::IterRecord) -> f64| recs.iter().map(|r| (r.iter as f64, f(r))).collect();
        let loss = line_chart(
            "training loss",
            "iteration",
            &[("L", pick(|r| r.loss)), ("Lc", pick(|r| r.lc)), ("Lr", pick(|r| r.lr_loss))],
        );
        run.write("loss.svg", loss.as_bytes())?;
        let changes = recs
            .iter()
            .filter_map(|r| r.label_change.map(|c| (r.iter as f64, c)))
            .collect();
        let chart = line_chart("label change at target updates", "iteration", &[("changed fraction", changes)]);
        run.write("label_change.svg", chart.as_bytes())?;
    }
    println!(
        "{}: {} iterations, converged: {}",
        config.ablation.variant_name(),
        out.history.len(),
        out.converged
    );
    if let Some(truth) = &ds.labels {
        let m = score(&out.labels, truth, config.k, seed)?;
        print_metrics(&m);
        run.write("metrics.json", &serde_json::to_vec_pretty(&m).expect("metrics serialize"))?;
        run.manifest.metrics = Some(serde_json::to_value(&m).expect("metrics serialize"));
    }
    run.manifest.variant = Some(config.ablation.variant_name().into());
    run.manifest.config = Some(config);
    run.manifest.dataset = info;
    run.finish()
}

pub fn eval_cmd(args: &EvalArgs) -> Result<(), CliError> {
    let ckpt: Checkpoint<f64> = load_checkpoint(&args.checkpoint)?;
    let centroids = ckpt
        .centroids
        .as_ref()
        .ok_or_else(|| CliError::input(format!("{} holds no centroids; run `train` first", args.checkpoint.display())))?;
    let (ds, info) = load_data(&args.data)?;
    let truth = ds
        .labels
        .as_ref()
        .ok_or_else(|| CliError::input("eval needs ground-truth labels (--labels or --label-column)"))?;
    check_width(ckpt.autoencoder.input_width(), &ds)?;
    let z = ckpt.autoencoder.embed(&ds.x)?;
    let pred = assign_labels(&soft_assign(&z, centroids, 1.0)?);
    let m = score(&pred, truth, centroids.rows(), args.seed)?;
    print_metrics(&m);
    if let Some(dir) = &args.out {
        let mut run = RunDir::create(dir, "eval", args.seed)?;
        run.write("metrics.json", &serde_json::to_vec_pretty(&m).expect("metrics serialize"))?;
        run.manifest.artifacts.insert("input.ckpt".into(), sha256_hex(&fs::read(&args.checkpoint).unwrap_or_default()));
        run.manifest.metrics = Some(serde_json::to_value(&m).expect("metrics serialize"));
        run.manifest.dataset = info;
        run.finish()?;
    }
    Ok(())
}

pub fn make_imbalanced_cmd(args: &ImbalanceArgs) -> Result<(), CliError> {
    let kind = args.kind.parse().map_err(|e: Error| CliError::input(e.to_string()))?;
    let spec = ImbalanceSpec {
        kind,
        ratio: args.ratio,
        invert: args.invert,
    };
    spec.validate()?;
    let (ds, info) = load_data(&args.data)?;
    if ds.labels.is_none() {
        return Err(CliError::input("imbalance generation needs labels (--labels or --label-column)"));
    }
    let mut run = RunDir::create(&args.out, "make-imbalanced", args.seed)?;
    let out = make_imbalanced(&ds, &spec, &mut Rng::new(args.seed))?;
    if is_csv(&args.data.data) {
        let path = run.path("data.csv");
        write_csv(&out, &path)?;
        let bytes = fs::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        run.manifest.artifacts.insert("data.csv".into(), sha256_hex(&bytes));
    } else {
        let (img, lab) = (run.path("images.idx"), run.path("labels.idx"));
        write_idx(&out, &img, Some(&lab))?;
        for (name, p) in [("images.idx", &img), ("labels.idx", &lab)] {
            let bytes = fs::read(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            run.manifest.artifacts.insert(name.into(), sha256_hex(&bytes));
        }
    }
    let manifest = ImbalanceManifest {
        kind: spec.kind,
        ratio: spec.ratio,
        seed: args.seed,
        source: info.path.clone(),
        original_counts: ds.meta.class_counts.clone(),
        kept_counts: out.meta.class_counts.clone(),
    };
    run.write("imbalance.json", &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    println!("kept {} of {} samples: {:?}", out.len(), ds.len(), manifest.kept_counts);
    run.manifest.dataset = info;
    run.finish()
}
