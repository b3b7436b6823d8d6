//! Joint optimization of the clustering and reconstruction objectives.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    pretrain, reconstruction_grad, reconstruction_loss, Autoencoder, AutoencoderGrads, BatchSampler,
};
use crate::clustering::{
    estimate_cardinality, grad_centroids, grad_embedding, kl_loss, kmeans_init, reseed_empty_clusters, soft_assign,
    update_centroids, ClusterState,
};
use crate::config::{lr_at, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::scalar::Scalar;
use crate::statpool::StatPool;

/// One logged mini-batch step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// `λ·Lc + (1−λ)·Lr`.
    pub loss: f64,
    /// Batch-mean KL divergence.
    pub lc: f64,
    /// Batch-mean squared reconstruction error.
    pub lr_loss: f64,
    pub eta: f64,
    /// Fraction of changed hard labels, set on target-update steps.
    pub label_change: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "iter,L,Lc,Lr,eta,label_change";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            let change = r.label_change.map(|c| c.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", r.iter, r.loss, r.lc, r.lr_loss, r.eta, change)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput<T> {
    pub autoencoder: Autoencoder<T>,
    /// Clustering state recomputed on the final embeddings.
    pub state: ClusterState<T>,
    pub history: TrainHistory,
    pub labels: Vec<usize>,
    pub embeddings: Matrix<T>,
    /// Hard labels of the k-means initialization.
    pub init_labels: Vec<usize>,
    /// Iterations at which P was recomputed.
    pub target_updates: Vec<usize>,
    pub converged: bool,
}

/// Fraction of positions whose labels differ.
pub fn label_change(prev: &[usize], new: &[usize]) -> Result<f64> {
    if prev.len() != new.len() {
        return Err(Error::len("label_change", prev.len(), new.len()));
    }
    if prev.is_empty() {
        return Ok(0.0);
    }
    let changed = prev.iter().zip(new).filter(|(a, b)| a != b).count();
    Ok(changed as f64 / prev.len() as f64)
}

/// True when fewer than a `delta` fraction of labels changed.
pub fn should_stop(prev: &[usize], new: &[usize], delta: f64) -> Result<bool> {
    Ok(label_change(prev, new)? < delta)
}

/// Losses and gradients of one mini-batch step.
#[derive(Clone, Debug)]
pub struct StepGrads<T> {
    /// Batch-mean KL divergence.
    pub lc: f64,
    /// Batch-mean reconstruction error.
    pub lr: f64,
    /// Gradients of `λ·Lc + (1−λ)·Lr` for the encoder, decoder and pool.
    pub model: AutoencoderGrads<T>,
    /// Gradient of the summed KL divergence with respect to the centroids.
    pub centroids: Matrix<T>,
}

impl<T> StepGrads<T> {
    pub fn loss(&self, lambda: f64) -> f64 {
        lambda * self.lc + (1.0 - lambda) * self.lr
    }
}

/// Forward and backward pass of the joint objective on one batch with the
/// target `p` held fixed. The encoder receives `λ·∂Lc/∂θ + (1−λ)·∂Lr/∂θ`;
/// the decoder and pool receive `(1−λ)·∂Lr/∂θ'`.
pub fn joint_gradients<T: Scalar>(
    ae: &Autoencoder<T>,
    centroids: &Matrix<T>,
    x: &Matrix<T>,
    p: &Matrix<T>,
    groups: Option<(&[usize], usize)>,
    lambda: f64,
) -> Result<StepGrads<T>> {
    let n = x.rows();
    let (z, enc_trace) = ae.encoder.forward(x, None, None)?;
    let q = soft_assign(&z, centroids, T::one())?;
    let (x_rec, dec_trace) = ae.decode(&z, groups)?;
    let lc = kl_loss(p, &q)?.to_f64_lossy() / n as f64;
    let lr = reconstruction_loss(x, &x_rec)?.to_f64_lossy();
    let grad_z = grad_embedding(&z, centroids, p, &q)?.scale(T::of(lambda) / T::from_count(n));
    let grad_rec = reconstruction_grad(x, &x_rec)?.scale(T::of(1.0 - lambda));
    let model = ae.backward(&enc_trace, &dec_trace, &grad_rec, Some(&grad_z))?;
    Ok(StepGrads {
        lc,
        lr,
        model,
        centroids: grad_centroids(&z, centroids, p, &q)?,
    })
}

fn check(config: &TrainConfig, x: &Matrix<impl Scalar>) -> Result<()> {
    config.validate()?;
    if config.alpha != 1.0 {
        return Err(Error::Parameter(format!(
            "the clustering gradients assume alpha = 1, got {}",
            config.alpha
        )));
    }
    if config.k > x.rows() {
        return Err(Error::Parameter(format!("k = {} exceeds the {} samples", config.k, x.rows())));
    }
    Ok(())
}

/// Pretrains the autoencoder, then runs the clustering phase.
pub fn train<T: Scalar>(config: &TrainConfig, x: &Matrix<T>, rng: &Rng) -> Result<TrainOutput<T>> {
    check(config, x)?;
    let ae = pretrain(config, x, &mut rng.derive(1))?;
    train_from(config, ae, x, rng)
}

/// Clustering phase from a pretrained autoencoder: k-means initialization on
/// the embeddings, then mini-batch SGD on `λ·Lc + (1−λ)·Lr` with the target
/// distribution refreshed every `update_interval` iterations.
pub fn train_from<T: Scalar>(
    config: &TrainConfig,
    mut ae: Autoencoder<T>,
    x: &Matrix<T>,
    rng: &Rng,
) -> Result<TrainOutput<T>> {
    check(config, x)?;
    if ae.input_width() != x.cols() {
        return Err(Error::len("train input width", ae.input_width(), x.cols()));
    }
    let alpha = T::of(config.alpha);
    let gamma = T::of(config.gamma);
    let weighted = config.ablation.weighted_target;
    let lambda = config.lambda;
    let k = config.k;

    let z = ae.embed(x)?;
    let km = kmeans_init(&z, k, &mut rng.derive(2), config.kmeans_restarts)?;
    let init_labels = km.labels.clone();
    let mut state = ClusterState::compute(&z, km.centroids, alpha, gamma, weighted)?;
    let mut labels = state.labels();
    let mut target_updates = vec![0];

    if config.ablation.stat_pooling {
        let width = ae
            .pool_width()
            .ok_or_else(|| Error::Parameter("statistics pooling needs at least one hidden layer".into()))?;
        if ae.pool.as_ref().map(StatPool::width) != Some(width) {
            ae.pool = Some(StatPool::pass_through(width, config.spread));
        }
    } else {
        ae.pool = None;
    }

    let mut history = TrainHistory::default();
    let mut converged = false;
    let mut batch_rng = rng.derive(3);
    let mut sampler = BatchSampler::new(x.rows(), config.batch);
    let max_iters = config.scaled(config.max_iters);

    for it in 0..max_iters {
        let mut change = None;
        if it > 0 && it % config.update_interval == 0 {
            let z = ae.embed(x)?;
            let mut centroids = state.centroids.clone();
            let q = soft_assign(&z, &centroids, alpha)?;
            reseed_empty_clusters(&z, &q, &mut centroids, &estimate_cardinality(&q));
            state = ClusterState::compute(&z, centroids, alpha, gamma, weighted)?;
            let new_labels = state.labels();
            change = Some(label_change(&labels, &new_labels)?);
            converged = should_stop(&labels, &new_labels, config.delta)?;
            labels = new_labels;
            target_updates.push(it);
        }

        let idx = sampler.next_batch(&mut batch_rng).to_vec();
        let nb = idx.len();
        let xb = x.select_rows(&idx);
        let pb = state.p.select_rows(&idx);
        let group: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let eta = lr_at(it, config);

        let step = joint_gradients(&ae, &state.centroids, &xb, &pb, Some((&group, k)), lambda)?;
        let loss = step.loss(lambda);
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        history.records.push(IterRecord {
            iter: it,
            loss,
            lc: step.lc,
            lr_loss: step.lr,
            eta,
            label_change: change,
        });
        if converged {
            break;
        }
        state.centroids = update_centroids(&state.centroids, &step.centroids, T::of(eta), nb)?;
        ae.apply(&step.model, T::of(eta))?;
    }

    let embeddings = ae.embed(x)?;
    let state = ClusterState::compute(&embeddings, state.centroids, alpha, gamma, weighted)?;
    let labels = state.labels();
    Ok(TrainOutput {
        autoencoder: ae,
        state,
        history,
        labels,
        embeddings,
        init_labels,
        target_updates,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;
    use crate::metrics::clustering_accuracy;

    fn blob_config() -> TrainConfig {
        TrainConfig {
            k: 3,
            hidden: vec![16, 16, 32],
            embed_dim: 3,
            batch: 64,
            update_interval: 20,
            pretrain_iters: 300,
            finetune_iters: 600,
            max_iters: 200,
            kmeans_restarts: 5,
            ..TrainConfig::default()
        }
    }

    fn blobs(seed: u64) -> (Matrix<f64>, Vec<usize>) {
        let ds = gaussian_blobs::<f64>(
            &[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]],
            &[200, 40, 10],
            0.2,
            &mut Rng::new(seed),
        )
        .unwrap();
        (ds.x, ds.labels.unwrap())
    }

    #[test]
    fn should_stop_examples() {
        assert!(should_stop(&[1, 2, 3], &[1, 2, 3], 0.001).unwrap());
        let a = vec![0; 100];
        let mut b = a.clone();
        b[7] = 1;
        assert!(!should_stop(&a, &b, 0.001).unwrap());
        assert!(should_stop(&[0; 10], &[0; 10], 0.001).unwrap());
        assert!(should_stop(&[0; 3], &[0; 4], 0.1).is_err());
    }

    #[test]
    fn zero_iterations_keep_kmeans_labels() {
        let (x, _) = blobs(0);
        let config = TrainConfig { max_iters: 0, ..blob_config() };
        let out = train(&config, &x, &Rng::new(1)).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.labels, out.init_labels);
        let fresh = pretrain::<f64>(&config, &x, &mut Rng::new(1).derive(1)).unwrap();
        assert_eq!(out.autoencoder.encoder, fresh.encoder);
        assert_eq!(out.autoencoder.decoder, fresh.decoder);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, _) = blobs(0);
        let small = x.select_rows(&[0, 1]);
        assert!(matches!(train(&blob_config(), &small, &Rng::new(0)), Err(Error::Parameter(_))));
        let c = TrainConfig { alpha: 2.0, ..blob_config() };
        assert!(matches!(train(&c, &x, &Rng::new(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn blobs_are_recovered_and_history_is_consistent() {
        let (x, truth) = blobs(4);
        let config = blob_config();
        let out = train(&config, &x, &Rng::new(11)).unwrap();
        let acc = clustering_accuracy(&out.labels, &truth).unwrap();
        assert!(acc >= 0.95, "acc {acc}");
        assert_eq!(out.embeddings.shape(), (x.rows(), config.embed_dim));
        for r in &out.history.records {
            let expect = config.lambda * r.lc + (1.0 - config.lambda) * r.lr_loss;
            assert!((r.loss - expect).abs() <= 1e-9);
        }
        for (i, &u) in out.target_updates.iter().enumerate() {
            assert_eq!(u, i * config.update_interval);
        }
        let flagged: Vec<usize> = out
            .history
            .records
            .iter()
            .filter(|r| r.label_change.is_some())
            .map(|r| r.iter)
            .collect();
        assert_eq!(flagged, out.target_updates[1..]);
        let mut prev = f64::INFINITY;
        for r in &out.history.records {
            assert!(r.eta <= prev);
            prev = r.eta;
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let (x, _) = blobs(2);
        let config = TrainConfig { max_iters: 60, ..blob_config() };
        let a = train(&config, &x, &Rng::new(5)).unwrap();
        let b = train(&config, &x, &Rng::new(5)).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.embeddings, b.embeddings);
    }

    #[test]
    fn lambda_changes_the_clustering_loss() {
        let (x, _) = blobs(3);
        let base = TrainConfig { max_iters: 100, ..blob_config() };
        let ae = pretrain::<f64>(&base, &x, &mut Rng::new(9)).unwrap();
        let hi = TrainConfig { lambda: 0.999, ..base.clone() };
        let lo = TrainConfig { lambda: 0.001, ..base };
        let a = train_from(&hi, ae.clone(), &x, &Rng::new(9)).unwrap();
        let b = train_from(&lo, ae, &x, &Rng::new(9)).unwrap();
        let lc = |o: &TrainOutput<f64>| o.history.records.last().unwrap().lc;
        assert_ne!(lc(&a), lc(&b));
    }

    #[test]
    fn unweighted_variant_uses_the_dec_target() {
        let (x, _) = blobs(1);
        let config = TrainConfig {
            max_iters: 40,
            ablation: crate::config::Ablation {
                weighted_target: false,
                stat_pooling: false,
            },
            ..blob_config()
        };
        let out = train(&config, &x, &Rng::new(2)).unwrap();
        assert!(out.autoencoder.pool.is_none());
        assert!(out.state.v.iter().all(|&v| v == 0.0));
        // DEC target recomputed from Q directly
        let q = &out.state.q;
        let u = q.column_sums();
        for i in 0..q.rows() {
            let w: Vec<f64> = (0..q.cols()).map(|j| q.get(i, j).powi(2) / u[j]).collect();
            let s: f64 = w.iter().sum();
            for j in 0..q.cols() {
                assert!((out.state.p.get(i, j) - w[j] / s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![
                IterRecord { iter: 0, loss: 1.5, lc: 0.5, lr_loss: 1.0, eta: 0.01, label_change: None },
                IterRecord { iter: 1, loss: 1.0, lc: 0.0, lr_loss: 1.0, eta: 0.01, label_change: Some(0.25) },
            ],
        };
        assert_eq!(h.to_csv(), "iter,L,Lc,Lr,eta,label_change\n0,1.5,0.5,1,0.01,\n1,1,0,1,0.01,0.25\n");
    }
}
