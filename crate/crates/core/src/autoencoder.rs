//! Fully connected encoder/decoder pair with manual backpropagation and
//! greedy layer-wise pretraining.

use serde::{Deserialize, Serialize};

use crate::config::{lr_at, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{glorot_init, Matrix, Rng};
use crate::scalar::Scalar;
use crate::statpool::{PoolGrads, PoolOutput, StatPool};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Identity => v,
        }
    }
}

/// Affine map `x·W + b` followed by an activation. `weight` is `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::len("Layer::new", weight.cols(), bias.len()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, activation: Activation) -> Result<Self> {
        Self::new(glorot_init(rng, fan_in, fan_out)?, vec![T::zero(); fan_out], activation)
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }

    /// Returns `(pre-activation, post-activation)`.
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let mut pre = x.matmul(&self.weight)?;
        pre.add_row_vector(&self.bias)?;
        let post = match self.activation {
            Activation::Identity => pre.clone(),
            act => pre.map(|v| act.apply(v)),
        };
        Ok((pre, post))
    }
}

#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct NetGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> NetGrads<T> {
    /// All partials flattened layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend_from_slice(g.weight.data());
            out.extend_from_slice(&g.bias);
        }
        out
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.layers {
            g.weight = g.weight.scale(s);
            for b in &mut g.bias {
                *b = *b * s;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    /// Input actually multiplied by the weights (after dropout, after pooling).
    pub input: Matrix<T>,
    /// Inverted-dropout mask applied to the raw input.
    pub mask: Option<Matrix<T>>,
    pub pre: Matrix<T>,
    pub post: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct PoolTrace<T> {
    /// Index of the layer whose output is pooled.
    pub after_layer: usize,
    pub hidden: Matrix<T>,
    pub output: PoolOutput<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub layers: Vec<LayerTrace<T>>,
    pub pool: Option<PoolTrace<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output(&self) -> Option<&Matrix<T>> {
        self.layers.last().map(|l| &l.post)
    }
}

/// Pooling hook inserted into a decoder forward pass.
#[derive(Clone, Copy, Debug)]
pub struct PoolHook<'a, T> {
    pub pool: &'a StatPool<T>,
    pub labels: &'a [usize],
    pub k: usize,
}

/// Stack of affine layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> MlpNetwork<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::Shape {
                    op: "MlpNetwork::new",
                    left: format!("layer {i} out {}", pair[0].output_width()),
                    right: format!("layer {} in {}", i + 1, pair[1].input_width()),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialized network; ReLU on hidden layers, identity on the last.
    pub fn build(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Parameter("need at least input and output widths".into()));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer::glorot(rng, w[0], w[1], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Layer widths from input to output.
    pub fn topology(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Layer::output_width));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Forward pass. Dropout is applied to every layer input when `dropout`
    /// carries a positive rate; `hook` pools the output of one layer.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        mut dropout: Option<(f64, &mut Rng)>,
        hook: Option<(usize, PoolHook<'_, T>)>,
    ) -> Result<(Matrix<T>, ForwardTrace<T>)> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(
                "forward",
                x.shape(),
                (x.rows(), self.input_width()),
            ));
        }
        if let Some((pos, h)) = &hook {
            if *pos + 1 >= self.depth() {
                return Err(Error::Parameter(format!(
                    "pool position {pos} must precede the output layer of a depth-{} network",
                    self.depth()
                )));
            }
            if h.pool.width() != self.layers[*pos].output_width() {
                return Err(Error::len(
                    "pool width",
                    self.layers[*pos].output_width(),
                    h.pool.width(),
                ));
            }
        }
        let mut traces = Vec::with_capacity(self.depth());
        let mut pool_trace = None;
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let (input, mask) = match dropout.as_mut() {
                Some((rate, rng)) if *rate > 0.0 => {
                    let mask = dropout_mask(current.rows(), current.cols(), *rate, rng);
                    let dropped = current.zip_map(&mask, "dropout", |a, b| a * b)?;
                    (dropped, Some(mask))
                }
                _ => (current, None),
            };
            let (pre, post) = layer.forward(&input)?;
            current = post.clone();
            if let Some((pos, h)) = &hook {
                if *pos == l {
                    let output = h.pool.forward(&post, h.labels, h.k)?;
                    current = output.augmented.clone();
                    pool_trace = Some(PoolTrace {
                        after_layer: l,
                        hidden: post.clone(),
                        output,
                    });
                }
            }
            traces.push(LayerTrace {
                input,
                mask,
                pre,
                post,
            });
        }
        Ok((
            current,
            ForwardTrace {
                layers: traces,
                pool: pool_trace,
            },
        ))
    }

    /// Reverse pass from `grad_out = ∂L/∂output`. Returns parameter gradients,
    /// pooling gradients when the trace pooled, and `∂L/∂input`.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        grad_out: &Matrix<T>,
        pool: Option<&StatPool<T>>,
    ) -> Result<(NetGrads<T>, Option<PoolGrads<T>>, Matrix<T>)> {
        if trace.depth() != self.depth() {
            return Err(Error::TraceMismatch(format!(
                "trace depth {} vs network depth {}",
                trace.depth(),
                self.depth()
            )));
        }
        if trace.pool.is_some() != pool.is_some() {
            return Err(Error::TraceMismatch(
                "pooling parameters must be supplied exactly when the trace pooled".into(),
            ));
        }
        let out_shape = trace.layers[self.depth() - 1].post.shape();
        if grad_out.shape() != out_shape {
            return Err(Error::TraceMismatch(format!(
                "upstream gradient {:?} vs output {:?}",
                grad_out.shape(),
                out_shape
            )));
        }
        let mut grads = Vec::with_capacity(self.depth());
        let mut pool_grads = None;
        let mut g = grad_out.clone();
        for l in (0..self.depth()).rev() {
            let layer = &self.layers[l];
            let lt = &trace.layers[l];
            if lt.input.cols() != layer.input_width()
                || lt.pre.cols() != layer.output_width()
                || lt.pre.rows() != lt.input.rows()
            {
                return Err(Error::TraceMismatch(format!(
                    "layer {l}: trace {:?}->{:?}, weight {:?}",
                    lt.input.shape(),
                    lt.pre.shape(),
                    layer.weight.shape()
                )));
            }
            if let (Some(pt), Some(p)) = (&trace.pool, pool) {
                if pt.after_layer == l {
                    let pg = p.backward(&pt.output, &g, &pt.hidden)?;
                    g = pg.grad_h.clone();
                    pool_grads = Some(pg);
                }
            }
            if g.shape() != lt.pre.shape() {
                return Err(Error::TraceMismatch(format!(
                    "layer {l}: gradient {:?} vs activation {:?}",
                    g.shape(),
                    lt.pre.shape()
                )));
            }
            if layer.activation == Activation::Relu {
                for (gv, &p) in g.data_mut().iter_mut().zip(lt.pre.data()) {
                    if p <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            let weight = lt.input.t_matmul(&g)?;
            let bias = g.column_sums();
            let mut g_in = g.matmul_t(&layer.weight)?;
            if let Some(mask) = &lt.mask {
                g_in = g_in.zip_map(mask, "dropout backward", |a, b| a * b)?;
            }
            grads.push(LayerGrads { weight, bias });
            g = g_in;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, pool_grads, g))
    }

    /// Plain SGD step `θ ← θ − lr·∇θ`.
    pub fn apply(&mut self, grads: &NetGrads<T>, lr: T) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::TraceMismatch("gradient depth differs from network".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weight.axpy(-lr, &g.weight)?;
            for (b, &gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b = *b - lr * gb;
            }
        }
        Ok(())
    }
}

fn dropout_mask<T: Scalar>(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Matrix<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    let data = (0..rows * cols)
        .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
        .collect();
    Matrix::from_raw(rows, cols, data)
}

/// Runs the encoder. Dropout is active only for `dropout_rate > 0`.
pub fn encode<T: Scalar>(
    net: &MlpNetwork<T>,
    x: &Matrix<T>,
    dropout_rate: f64,
    rng: &mut Rng,
) -> Result<(Matrix<T>, ForwardTrace<T>)> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Parameter(format!("dropout rate {dropout_rate} outside [0,1)")));
    }
    net.forward(x, Some((dropout_rate, rng)), None)
}

/// Index of the decoder layer whose output feeds the pooling layer: the
/// second hidden layer, or the only hidden layer of a two-layer decoder.
pub fn pool_position(decoder_depth: usize) -> Option<usize> {
    match decoder_depth {
        0 | 1 => None,
        2 => Some(0),
        _ => Some(1),
    }
}

/// Runs the decoder, pooling the second hidden layer when a hook is given.
pub fn decode<T: Scalar>(
    net: &MlpNetwork<T>,
    z: &Matrix<T>,
    pool_hook: Option<PoolHook<'_, T>>,
) -> Result<(Matrix<T>, ForwardTrace<T>)> {
    let hook = match pool_hook {
        Some(h) => {
            let pos = pool_position(net.depth()).ok_or_else(|| {
                Error::Parameter("decoder has no hidden layer to pool".into())
            })?;
            Some((pos, h))
        }
        None => None,
    };
    net.forward(z, None, hook)
}

/// `Σ‖x_i − x'_i‖² / n`.
pub fn reconstruction_loss<T: Scalar>(x: &Matrix<T>, x_rec: &Matrix<T>) -> Result<T> {
    x.same_shape(x_rec, "reconstruction_loss")?;
    let sum: T = x
        .data()
        .iter()
        .zip(x_rec.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / T::from_count(x.rows().max(1)))
}

/// `∂L_r/∂x'` for the mean-over-batch loss.
pub fn reconstruction_grad<T: Scalar>(x: &Matrix<T>, x_rec: &Matrix<T>) -> Result<Matrix<T>> {
    let s = T::of(2.0) / T::from_count(x.rows().max(1));
    x_rec.zip_map(x, "reconstruction_grad", |r, t| s * (r - t))
}

#[derive(Clone, Debug)]
pub struct AutoencoderGrads<T> {
    pub encoder: NetGrads<T>,
    pub decoder: NetGrads<T>,
    pub pool: Option<PoolGrads<T>>,
}

/// Encoder `f_θ`, decoder `g_θ'`, and the optional statistics pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T> {
    pub encoder: MlpNetwork<T>,
    pub decoder: MlpNetwork<T>,
    pub pool: Option<StatPool<T>>,
}

impl<T: Scalar> Autoencoder<T> {
    /// Symmetric autoencoder over encoder widths `d_x, h_1, .., embed`.
    pub fn build(encoder_widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let encoder = MlpNetwork::build(encoder_widths, rng)?;
        let rev: Vec<usize> = encoder_widths.iter().rev().copied().collect();
        let decoder = MlpNetwork::build(&rev, rng)?;
        Self::new(encoder, decoder, None)
    }

    pub fn new(encoder: MlpNetwork<T>, decoder: MlpNetwork<T>, pool: Option<StatPool<T>>) -> Result<Self> {
        if encoder.output_width() != decoder.input_width() {
            return Err(Error::len(
                "Autoencoder::new",
                encoder.output_width(),
                decoder.input_width(),
            ));
        }
        if let Some(p) = &pool {
            let pos = pool_position(decoder.depth())
                .ok_or_else(|| Error::Parameter("decoder too shallow for pooling".into()))?;
            if p.width() != decoder.layers()[pos].output_width() {
                return Err(Error::len(
                    "Autoencoder::new pool",
                    decoder.layers()[pos].output_width(),
                    p.width(),
                ));
            }
        }
        Ok(Self {
            encoder,
            decoder,
            pool,
        })
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn embed_width(&self) -> usize {
        self.encoder.output_width()
    }

    /// Width of the pooled decoder layer.
    pub fn pool_width(&self) -> Option<usize> {
        pool_position(self.decoder.depth()).map(|p| self.decoder.layers()[p].output_width())
    }

    /// Deterministic embedding of every row of `x`.
    pub fn embed(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.encoder.forward(x, None, None)?.0)
    }

    pub fn decode(
        &self,
        z: &Matrix<T>,
        groups: Option<(&[usize], usize)>,
    ) -> Result<(Matrix<T>, ForwardTrace<T>)> {
        let hook = match (&self.pool, groups) {
            (Some(pool), Some((labels, k))) => Some(PoolHook { pool, labels, k }),
            _ => None,
        };
        decode(&self.decoder, z, hook)
    }

    /// Reverse pass through decoder (and pool) then encoder. `grad_z_extra`
    /// is added to the embedding gradient before it enters the encoder.
    pub fn backward(
        &self,
        enc_trace: &ForwardTrace<T>,
        dec_trace: &ForwardTrace<T>,
        grad_x_rec: &Matrix<T>,
        grad_z_extra: Option<&Matrix<T>>,
    ) -> Result<AutoencoderGrads<T>> {
        let pool = if dec_trace.pool.is_some() {
            Some(self.pool.as_ref().ok_or_else(|| {
                Error::TraceMismatch("trace pooled but the model has no pool".into())
            })?)
        } else {
            None
        };
        let (decoder, pool_grads, mut grad_z) = self.decoder.backward(dec_trace, grad_x_rec, pool)?;
        if let Some(extra) = grad_z_extra {
            grad_z.axpy(T::one(), extra)?;
        }
        let (encoder, _, _) = self.encoder.backward(enc_trace, &grad_z, None)?;
        Ok(AutoencoderGrads {
            encoder,
            decoder,
            pool: pool_grads,
        })
    }

    pub fn apply(&mut self, grads: &AutoencoderGrads<T>, lr: T) -> Result<()> {
        self.encoder.apply(&grads.encoder, lr)?;
        self.decoder.apply(&grads.decoder, lr)?;
        if let (Some(p), Some(g)) = (&mut self.pool, &grads.pool) {
            p.apply(g, lr)?;
        }
        Ok(())
    }
}

/// Gradients of the mean reconstruction loss for every encoder, decoder and
/// pool parameter.
pub fn backward_reconstruction<T: Scalar>(
    ae: &Autoencoder<T>,
    enc_trace: &ForwardTrace<T>,
    dec_trace: &ForwardTrace<T>,
    x: &Matrix<T>,
    x_rec: &Matrix<T>,
) -> Result<AutoencoderGrads<T>> {
    if dec_trace.output().map(Matrix::shape) != Some(x_rec.shape()) {
        return Err(Error::TraceMismatch("reconstruction does not match the decoder trace".into()));
    }
    let g = reconstruction_grad(x, x_rec)?;
    ae.backward(enc_trace, dec_trace, &g, None)
}

/// Epoch-wise shuffled mini-batch indices.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.clamp(1, n.max(1)),
        }
    }

    /// Next batch; reshuffles when the current epoch is exhausted.
    pub fn next_batch(&mut self, rng: &mut Rng) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let start = self.pos;
        self.pos += self.batch;
        &self.order[start..self.pos]
    }
}

/// Greedy layer-wise pretraining with dropout followed by end-to-end
/// fine-tuning without dropout.
///
/// Each encoder layer is trained together with its mirror decoder layer as a
/// shallow autoencoder on the (clean) output of the layers below it, with
/// dropout on both the shallow model's input and its hidden units.
pub fn pretrain<T: Scalar>(config: &TrainConfig, x: &Matrix<T>, rng: &mut Rng) -> Result<Autoencoder<T>> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Parameter("cannot pretrain on an empty dataset".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(Error::Parameter(format!("dropout rate {} outside [0,1)", config.dropout)));
    }
    let widths = config.encoder_widths(x.cols());
    let mut init_rng = rng.derive(0);
    let mut ae = Autoencoder::build(&widths, &mut init_rng)?;

    let layer_iters = config.scaled(config.pretrain_iters);
    let depth = ae.encoder.depth();
    let mut h = x.clone();
    for l in 0..depth {
        if layer_iters > 0 {
            let mirror = depth - 1 - l;
            let mut shallow = MlpNetwork::new(vec![
                ae.encoder.layers()[l].clone(),
                ae.decoder.layers()[mirror].clone(),
            ])?;
            let mut batch_rng = rng.derive(1 + l as u64);
            let mut sampler = BatchSampler::new(h.rows(), config.batch);
            for it in 0..layer_iters {
                let idx = sampler.next_batch(&mut batch_rng);
                let xb = h.select_rows(idx);
                let (out, trace) = shallow.forward(&xb, Some((config.dropout, &mut batch_rng)), None)?;
                let g = reconstruction_grad(&xb, &out)?;
                let (grads, _, _) = shallow.backward(&trace, &g, None)?;
                shallow.apply(&grads, T::of(lr_at(it, config)))?;
            }
            let mut trained = shallow.layers.into_iter();
            ae.encoder.layers[l] = trained.next().expect("two layers");
            ae.decoder.layers[mirror] = trained.next().expect("two layers");
        }
        if l + 1 < depth {
            h = ae.encoder.layers()[l].forward(&h)?.1;
        }
    }

    let tune_iters = config.scaled(config.finetune_iters);
    let mut batch_rng = rng.derive(1 + depth as u64);
    let mut sampler = BatchSampler::new(x.rows(), config.batch);
    for it in 0..tune_iters {
        let xb = x.select_rows(sampler.next_batch(&mut batch_rng));
        let (z, enc_trace) = ae.encoder.forward(&xb, None, None)?;
        let (x_rec, dec_trace) = ae.decode(&z, None)?;
        let grads = backward_reconstruction(&ae, &enc_trace, &dec_trace, &xb, &x_rec)?;
        ae.apply(&grads, T::of(lr_at(it, config)))?;
    }
    Ok(ae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_error};
    use crate::statpool::Spread;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_f64_rows(rows).unwrap()
    }

    fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::new(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_emit_relu_clipped_bias() {
        let l1 = Layer::new(Matrix::zeros(3, 2), vec![0.5, -0.5], Activation::Relu).unwrap();
        let l2 = Layer::new(Matrix::zeros(2, 2), vec![-1.0, 2.0], Activation::Relu).unwrap();
        let net = MlpNetwork::new(vec![l1, l2]).unwrap();
        let x = m(&[&[1.0, 2.0, 3.0], &[-4.0, 0.0, 9.0]]);
        let (z, trace) = encode(&net, &x, 0.0, &mut Rng::new(0)).unwrap();
        assert_eq!(z, m(&[&[0.0, 2.0], &[0.0, 2.0]]));
        assert_eq!(trace.depth(), 2);
        assert!(trace.layers.iter().all(|l| l.mask.is_none()));
    }

    #[test]
    fn identity_network_round_trips() {
        let l = Layer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let net = MlpNetwork::new(vec![l]).unwrap();
        let x = m(&[&[1.0, -2.0, 3.5]]);
        let (z, _) = encode(&net, &x, 0.0, &mut Rng::new(0)).unwrap();
        assert_eq!(z, x);
        let (xr, _) = decode(&net, &x, None).unwrap();
        assert_eq!(xr, x);
    }

    #[test]
    fn encode_is_deterministic_without_dropout() {
        let mut rng = Rng::new(1);
        let net = MlpNetwork::<f64>::build(&[4, 6, 3], &mut rng).unwrap();
        let x = random_matrix(&mut rng, 5, 4);
        let a = encode(&net, &x, 0.0, &mut Rng::new(10)).unwrap().0;
        let b = encode(&net, &x, 0.0, &mut Rng::new(99)).unwrap().0;
        assert_eq!(a, b);
        let plain = net.forward(&x, None, None).unwrap().0;
        assert_eq!(a, plain);
    }

    #[test]
    fn dropout_records_masks() {
        let mut rng = Rng::new(1);
        let net = MlpNetwork::<f64>::build(&[4, 6, 3], &mut rng).unwrap();
        let x = random_matrix(&mut rng, 5, 4);
        let (_, trace) = encode(&net, &x, 0.5, &mut rng).unwrap();
        for lt in &trace.layers {
            let mask = lt.mask.as_ref().expect("mask");
            assert!(mask.data().iter().all(|&v| v == 0.0 || v == 2.0));
        }
        assert!(encode(&net, &x, 1.0, &mut rng).is_err());
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let net = MlpNetwork::<f64>::build(&[4, 3], &mut Rng::new(0)).unwrap();
        assert!(matches!(
            encode(&net, &Matrix::zeros(2, 5), 0.0, &mut Rng::new(0)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn pass_through_hook_is_neutral() {
        let mut rng = Rng::new(2);
        let dec = MlpNetwork::<f64>::build(&[3, 8, 6, 6, 5], &mut rng).unwrap();
        let z = random_matrix(&mut rng, 7, 3);
        let pool = StatPool::pass_through(6, Spread::Std);
        let labels = [0, 1, 1, 0, 2, 2, 1];
        let hook = PoolHook { pool: &pool, labels: &labels, k: 3 };
        let (with, trace) = decode(&dec, &z, Some(hook)).unwrap();
        let (without, _) = decode(&dec, &z, None).unwrap();
        assert_eq!(with, without);
        assert_eq!(trace.pool.as_ref().unwrap().after_layer, 1);
        let (again, _) = decode(&dec, &z, Some(hook)).unwrap();
        assert_eq!(with, again);
    }

    #[test]
    fn reconstruction_loss_examples() {
        let x = m(&[&[1.0, 1.0]]);
        assert_eq!(reconstruction_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&x, &m(&[&[0.0, 0.0]])).unwrap(), 2.0);
        assert_eq!(
            reconstruction_loss(&m(&[&[2.0], &[0.0]]), &m(&[&[0.0], &[0.0]])).unwrap(),
            2.0
        );
        assert!(reconstruction_loss(&x, &m(&[&[1.0]])).is_err());
    }

    fn single_layer_ae(w: f64) -> Autoencoder<f64> {
        let enc = MlpNetwork::new(vec![Layer::new(m(&[&[1.0]]), vec![0.0], Activation::Identity).unwrap()]).unwrap();
        let dec = MlpNetwork::new(vec![Layer::new(m(&[&[w]]), vec![0.0], Activation::Identity).unwrap()]).unwrap();
        Autoencoder::new(enc, dec, None).unwrap()
    }

    #[test]
    fn hand_differentiated_single_layer() {
        let ae = single_layer_ae(0.0);
        let x = m(&[&[1.0]]);
        let (z, et) = ae.encoder.forward(&x, None, None).unwrap();
        let (xr, dt) = ae.decode(&z, None).unwrap();
        assert_eq!(xr, m(&[&[0.0]]));
        let g = backward_reconstruction(&ae, &et, &dt, &x, &xr).unwrap();
        assert_eq!(g.decoder.layers[0].weight.get(0, 0), -2.0);
        assert_eq!(g.decoder.layers[0].bias[0], -2.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_gradient() {
        let ae = single_layer_ae(1.0);
        let x = m(&[&[3.0], &[-1.0]]);
        let (z, et) = ae.encoder.forward(&x, None, None).unwrap();
        let (xr, dt) = ae.decode(&z, None).unwrap();
        let g = backward_reconstruction(&ae, &et, &dt, &x, &xr).unwrap();
        assert!(g.encoder.flatten().iter().chain(&g.decoder.flatten()).all(|&v| v == 0.0));
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut rng = Rng::new(3);
        let ae = Autoencoder::<f64>::build(&[4, 5, 2], &mut rng).unwrap();
        let other = Autoencoder::<f64>::build(&[4, 5, 6, 2], &mut rng).unwrap();
        let x = random_matrix(&mut rng, 3, 4);
        let (z, et) = other.encoder.forward(&x, None, None).unwrap();
        let (xr, dt) = other.decode(&z, None).unwrap();
        assert!(matches!(
            backward_reconstruction(&ae, &et, &dt, &x, &xr),
            Err(Error::TraceMismatch(_))
        ));
    }

    fn set_params(ae: &mut Autoencoder<f64>, flat: &[f64]) {
        let mut i = 0;
        for net in [&mut ae.encoder, &mut ae.decoder] {
            for layer in net.layers_mut() {
                for v in layer.weight.data_mut() {
                    *v = flat[i];
                    i += 1;
                }
                for v in &mut layer.bias {
                    *v = flat[i];
                    i += 1;
                }
            }
        }
    }

    fn get_params(ae: &Autoencoder<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        for net in [&ae.encoder, &ae.decoder] {
            for layer in net.layers() {
                out.extend_from_slice(layer.weight.data());
                out.extend_from_slice(&layer.bias);
            }
        }
        out
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let mut ae = Autoencoder::<f64>::build(&[5, 7, 6, 3], &mut rng).unwrap();
            // zero biases put rows with all-dead units exactly on a ReLU kink
            for net in [&mut ae.encoder, &mut ae.decoder] {
                for layer in net.layers_mut() {
                    layer.bias.iter_mut().for_each(|b| *b = 0.1 * rng.normal());
                }
            }
            let x = random_matrix(&mut rng, 6, 5);
            let (z, et) = ae.encoder.forward(&x, None, None).unwrap();
            let (xr, dt) = ae.decode(&z, None).unwrap();
            let g = backward_reconstruction(&ae, &et, &dt, &x, &xr).unwrap();
            let mut analytic = g.encoder.flatten();
            analytic.extend(g.decoder.flatten());
            let p0 = get_params(&ae);
            let mut probe = ae.clone();
            let numeric = central_diff(
                |p| {
                    set_params(&mut probe, p);
                    let z = probe.embed(&x).unwrap();
                    let xr = probe.decode(&z, None).unwrap().0;
                    reconstruction_loss(&x, &xr).unwrap()
                },
                &p0,
                1e-5,
            );
            let err = max_rel_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        for seed in 0..20 {
            let mut rng = Rng::new(100 + seed);
            let mut ae = Autoencoder::<f64>::build(&[4, 6, 2], &mut rng).unwrap();
            let x = random_matrix(&mut rng, 8, 4);
            let (z, et) = ae.encoder.forward(&x, None, None).unwrap();
            let (xr, dt) = ae.decode(&z, None).unwrap();
            let before = reconstruction_loss(&x, &xr).unwrap();
            let g = backward_reconstruction(&ae, &et, &dt, &x, &xr).unwrap();
            ae.apply(&g, 1e-4).unwrap();
            let after = reconstruction_loss(&x, &ae.decode(&ae.embed(&x).unwrap(), None).unwrap().0).unwrap();
            assert!(after <= before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn pretrain_zero_iterations_is_noop() {
        let cfg = TrainConfig {
            hidden: vec![4],
            embed_dim: 2,
            pretrain_iters: 0,
            finetune_iters: 0,
            ..TrainConfig::default()
        };
        let x = random_matrix(&mut Rng::new(0), 10, 3);
        let rng = Rng::new(7);
        let ae = pretrain(&cfg, &x, &mut rng.clone()).unwrap();
        let fresh = Autoencoder::<f64>::build(&[3, 4, 2], &mut rng.derive(0)).unwrap();
        assert_eq!(ae, fresh);
        assert!(pretrain(&cfg, &Matrix::<f64>::zeros(0, 3), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn pretrain_fits_a_line_and_is_deterministic() {
        let mut rng = Rng::new(5);
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| {
                let t = rng.uniform();
                vec![0.2 + 0.6 * t, 0.8 - 0.5 * t]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8],
            embed_dim: 1,
            batch: 16,
            pretrain_iters: 500,
            finetune_iters: 4000,
            lr_decay_every: 1_000_000,
            eta0: 0.05,
            ..TrainConfig::default()
        };
        let ae = pretrain(&cfg, &x, &mut Rng::new(11)).unwrap();
        let xr = ae.decode(&ae.embed(&x).unwrap(), None).unwrap().0;
        let loss = reconstruction_loss(&x, &xr).unwrap();
        assert!(loss < 0.01, "{loss}");
        let again = pretrain(&cfg, &x, &mut Rng::new(11)).unwrap();
        assert_eq!(ae, again);
    }

    #[test]
    fn sampler_covers_epoch() {
        let mut s = BatchSampler::new(10, 5);
        let mut rng = Rng::new(0);
        let mut seen: Vec<usize> = s.next_batch(&mut rng).to_vec();
        seen.extend_from_slice(s.next_batch(&mut rng));
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
