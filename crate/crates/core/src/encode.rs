//! Mirror-symmetric fully connected autoencoder and BIC bottleneck selection.
//!
//! Hidden layers use ReLU; the bottleneck and the output layer are linear so
//! codes and reconstructions may be negative on standardized data. The loss
//! is the mean squared reconstruction error averaged over regions and
//! indicators.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

const MODEL_MAGIC: &str = "fluflow-autoencoder v1";

/// Layer widths `round(d·rⁱ)` for `i = 0..=n_hidden+1` with
/// `r = (bottleneck/d)^(1/(n_hidden+1))`; the last width is exactly `bottleneck`.
pub fn geometric_layer_schedule(input_dim: usize, bottleneck: usize, n_hidden: usize) -> Result<Vec<usize>> {
    if bottleneck == 0 || input_dim <= bottleneck {
        return Err(Error::Config(format!(
            "layer schedule needs input_dim > bottleneck ≥ 1, got {input_dim} and {bottleneck}"
        )));
    }
    let steps = (n_hidden + 1) as f64;
    let ratio = (bottleneck as f64 / input_dim as f64).powf(1.0 / steps);
    let mut sizes: Vec<usize> = (0..=n_hidden + 1)
        .map(|i| (input_dim as f64 * ratio.powi(i as i32)).round() as usize)
        .collect();
    sizes[0] = input_dim;
    *sizes.last_mut().unwrap() = bottleneck;
    if sizes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("layer schedule {sizes:?} is not strictly decreasing")));
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderSpec {
    /// Encoder widths from the input down to the bottleneck; the decoder mirrors them.
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl AutoencoderSpec {
    pub fn bottleneck(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 2 {
            return Err(Error::Config("autoencoder needs an input and a bottleneck width".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("encoder widths {s:?} must be strictly decreasing")));
        }
        if self.bottleneck() == 0 {
            return Err(Error::Config("bottleneck must have at least one cell".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Network parameters; layers run encoder first, then the mirrored decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder_sizes: Vec<usize>,
    layers: Vec<Dense>,
    seed: u64,
}

struct Forward {
    /// Pre-activations per layer (`width × batch`).
    pre: Vec<DMatrix<f64>>,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<DMatrix<f64>>,
}

fn all_widths(encoder_sizes: &[usize]) -> Vec<usize> {
    let mut widths = encoder_sizes.to_vec();
    widths.extend(encoder_sizes.iter().rev().skip(1));
    widths
}

impl Autoencoder {
    /// Uniform `±√(6/(fan_in + fan_out))` weights, zero biases. Each weight is
    /// addressed by `(layer, out, in)`, so appending an input indicator leaves
    /// the draws of existing connections unchanged.
    pub fn initialize(encoder_sizes: &[usize], seed: u64) -> Self {
        let widths = all_widths(encoder_sizes);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |o, i| {
                    let u = rng::counter_uniform(seed, "ae-init", l as u64, o as u64, i as u64);
                    (2.0 * u - 1.0) * limit
                });
                Dense {
                    w: weights,
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self {
            encoder_sizes: encoder_sizes.to_vec(),
            layers,
            seed,
        }
    }

    pub fn zeros(encoder_sizes: &[usize]) -> Self {
        let widths = all_widths(encoder_sizes);
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                w: DMatrix::zeros(w[1], w[0]),
                b: DVector::zeros(w[1]),
            })
            .collect();
        Self {
            encoder_sizes: encoder_sizes.to_vec(),
            layers,
            seed: 0,
        }
    }

    /// Assembles a network from explicit layers (encoder then decoder).
    pub fn from_layers(encoder_sizes: Vec<usize>, layers: Vec<Dense>, seed: u64) -> Result<Self> {
        let widths = all_widths(&encoder_sizes);
        if layers.len() + 1 != widths.len() {
            return Err(Error::Shape(format!(
                "{} layers for widths {widths:?}",
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.w.shape() != (widths[l + 1], widths[l]) || layer.b.len() != widths[l + 1] {
                return Err(Error::Shape(format!("layer {l} does not match widths {widths:?}")));
            }
        }
        Ok(Self {
            encoder_sizes,
            layers,
            seed,
        })
    }

    pub fn encoder_sizes(&self) -> &[usize] {
        &self.encoder_sizes
    }

    /// Decoder widths from the bottleneck back to the output.
    pub fn decoder_sizes(&self) -> Vec<usize> {
        self.encoder_sizes.iter().rev().copied().collect()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_sizes[0]
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_sizes.last().unwrap()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn n_encoder_layers(&self) -> usize {
        self.encoder_sizes.len() - 1
    }

    fn is_linear(&self, layer: usize) -> bool {
        layer + 1 == self.n_encoder_layers() || layer + 1 == self.layers.len()
    }

    fn forward(&self, input: DMatrix<f64>, upto: usize) -> Forward {
        let mut pre = Vec::with_capacity(upto);
        let mut acts = Vec::with_capacity(upto + 1);
        acts.push(input);
        for (l, layer) in self.layers.iter().take(upto).enumerate() {
            let mut z = &layer.w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            let a = if self.is_linear(l) {
                z.clone()
            } else {
                z.map(|v| v.max(0.0))
            };
            pre.push(z);
            acts.push(a);
        }
        Forward { pre, acts }
    }

    fn check_width(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "rows have width {}, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Bottleneck codes (`n × k`) of the rows of `x`.
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(x)?;
        let mut f = self.forward(x.transpose(), self.n_encoder_layers());
        Ok(f.acts.pop().unwrap().transpose())
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(x)?;
        let mut f = self.forward(x.transpose(), self.layers.len());
        Ok(f.acts.pop().unwrap().transpose())
    }

    /// Mean squared reconstruction error over all entries of `x`.
    pub fn loss(&self, x: &DMatrix<f64>) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok((r - x).norm_squared() / x.len() as f64)
    }

    /// Gradient of the mean squared loss over the columns of `xt` (`d × batch`).
    /// Returns `(loss, per-layer (dW, db))`.
    fn loss_gradient(&self, xt: &DMatrix<f64>) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
        let f = self.forward(xt.clone(), self.layers.len());
        let out = f.acts.last().unwrap();
        let diff = out - xt;
        let scale = 1.0 / xt.len() as f64;
        let loss = diff.norm_squared() * scale;
        let mut delta = diff * (2.0 * scale);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            if !self.is_linear(l) {
                delta.zip_apply(&f.pre[l], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let dw = &delta * f.acts[l].transpose();
            let db = delta.column_sum();
            if l > 0 {
                delta = self.layers[l].w.transpose() * &delta;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        (loss, grads)
    }

    /// Analytic gradient of [`Autoencoder::loss`], flattened in
    /// [`Autoencoder::parameters`] order.
    pub fn gradient(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let (_, grads) = self.loss_gradient(&x.transpose());
        let mut flat = Vec::new();
        for (dw, db) in grads {
            flat.extend(dw.transpose().iter());
            flat.extend(db.iter());
        }
        Ok(flat)
    }

    /// All parameters, per layer: weights row-major (`out × in`), then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend(layer.w.transpose().iter());
            flat.extend(layer.b.iter());
        }
        flat
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        let expected: usize = self.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        if flat.len() != expected {
            return Err(Error::Shape(format!("{} parameters, expected {expected}", flat.len())));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let (o, i) = layer.w.shape();
            layer.w = DMatrix::from_row_slice(o, i, &flat[offset..offset + o * i]);
            offset += o * i;
            layer.b = DVector::from_column_slice(&flat[offset..offset + o]);
            offset += o;
        }
        Ok(())
    }

    /// `J_enc(xᵢ)ᵀ v` for every row `xᵢ` of `x`: the gradient of the code
    /// projection `v · code(x)` with respect to the input (`n × d`).
    pub fn code_input_gradients(&self, x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_width(x)?;
        if v.len() != self.bottleneck() {
            return Err(Error::Shape(format!(
                "code direction has {} entries, bottleneck has {}",
                v.len(),
                self.bottleneck()
            )));
        }
        let n_enc = self.n_encoder_layers();
        let f = self.forward(x.transpose(), n_enc);
        let mut delta = DMatrix::from_fn(v.len(), x.nrows(), |r, _| v[r]);
        for l in (0..n_enc).rev() {
            if !self.is_linear(l) {
                delta.zip_apply(&f.pre[l], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            delta = self.layers[l].w.transpose() * &delta;
        }
        Ok(delta.transpose())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let params = self.parameters();
        let sizes: Vec<String> = self.encoder_sizes.iter().map(|s| s.to_string()).collect();
        let header = format!(
            "{MODEL_MAGIC}\nlayers {}\nseed {}\nparams {}\nend\n",
            sizes.join(" "),
            self.seed,
            params.len()
        );
        let io = |e| Error::io("<autoencoder model>", e);
        w.write_all(header.as_bytes()).map_err(io)?;
        for p in params {
            w.write_all(&p.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<autoencoder model>", e))?;
        let marker = b"\nend\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| Error::Schema("autoencoder model header is not terminated".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Schema("autoencoder model header is not UTF-8".into()))?;
        let body = &bytes[split + marker.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(Error::Schema("not a fluflow autoencoder model (bad magic/version)".into()));
        }
        let mut sizes = None;
        let mut seed = None;
        let mut count = None;
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let bad = || Error::Schema(format!("bad model header line {line:?}"));
            match key {
                "layers" => {
                    sizes = Some(
                        rest.split_whitespace()
                            .map(|s| s.parse::<usize>().map_err(|_| bad()))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "seed" => seed = Some(rest.trim().parse::<u64>().map_err(|_| bad())?),
                "params" => count = Some(rest.trim().parse::<usize>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (sizes, seed, count) = match (sizes, seed, count) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Schema("model header misses layers/seed/params".into())),
        };
        if sizes.len() < 2 || body.len() != count * 8 {
            return Err(Error::Schema(format!(
                "model body holds {} bytes, header announces {count} parameters",
                body.len()
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut model = Self::zeros(&sizes);
        model.seed = seed;
        model.set_parameters(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub model: Autoencoder,
    /// Mean squared reconstruction error per region (averaged over indicators).
    pub final_loss: f64,
    /// Full-data loss after every epoch.
    pub history: Vec<f64>,
}

/// Mini-batch gradient descent without momentum; rows are reshuffled every
/// epoch from a stream keyed by `spec.seed`.
pub fn train_autoencoder(x: &DMatrix<f64>, spec: &AutoencoderSpec) -> Result<TrainedAutoencoder> {
    spec.validate()?;
    let (n, d) = x.shape();
    if d != spec.layer_sizes[0] {
        return Err(Error::Shape(format!("data has {d} columns, spec input is {}", spec.layer_sizes[0])));
    }
    if n < spec.batch_size {
        return Err(Error::Config(format!("batch size {} exceeds {n} rows", spec.batch_size)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("autoencoder input must be finite and complete".into()));
    }

    let mut model = Autoencoder::initialize(&spec.layer_sizes, spec.seed);
    let xt = x.transpose();
    let initial = model.loss(x)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(spec.epochs);
    let lr = spec.learning_rate;

    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng::indexed_stream(spec.seed, "ae-shuffle", epoch as u64));
        for batch in order.chunks(spec.batch_size) {
            let xb = if batch.len() == n && spec.batch_size == n {
                xt.clone()
            } else {
                DMatrix::from_fn(d, batch.len(), |r, c| xt[(r, batch[c])])
            };
            let (_, grads) = model.loss_gradient(&xb);
            for (layer, (dw, db)) in model.layers.iter_mut().zip(grads) {
                layer.w.zip_apply(&dw, |w, g| *w -= lr * g);
                layer.b.axpy(-lr, &db, 1.0);
            }
        }
        let loss = model.loss(x)?;
        if !loss.is_finite() || (initial > 0.0 && loss > 1e6 * initial) {
            return Err(Error::Training(format!(
                "loss diverged to {loss:e} at epoch {epoch} (initial {initial:e}); try a smaller learning rate"
            )));
        }
        history.push(loss);
    }

    Ok(TrainedAutoencoder {
        final_loss: *history.last().unwrap(),
        model,
        history,
    })
}

/// `ln(n)·k + 2·n·L`.
pub fn bic(n: usize, k: usize, loss: f64) -> f64 {
    (n as f64).ln() * k as f64 + 2.0 * n as f64 * loss
}

/// How hidden widths are chosen for a given input width and bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerPlan {
    /// Geometric schedule with this many hidden layers.
    Geometric { n_hidden: usize },
    /// Fixed hidden widths between input and bottleneck.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderTemplate {
    pub plan: LayerPlan,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AutoencoderTemplate {
    fn default() -> Self {
        Self {
            plan: LayerPlan::Geometric { n_hidden: 3 },
            seed: 0,
            epochs: 2000,
            batch_size: 32,
            learning_rate: 0.01,
        }
    }
}

impl AutoencoderTemplate {
    pub fn spec(&self, input_dim: usize, bottleneck: usize) -> Result<AutoencoderSpec> {
        let layer_sizes = match &self.plan {
            LayerPlan::Geometric { n_hidden } => geometric_layer_schedule(input_dim, bottleneck, *n_hidden)?,
            LayerPlan::Explicit(hidden) => {
                let mut s = vec![input_dim];
                s.extend(hidden.iter().copied());
                s.push(bottleneck);
                s
            }
        };
        let spec = AutoencoderSpec {
            layer_sizes,
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicEntry {
    pub k: usize,
    pub loss: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct BottleneckSelection {
    pub best_k: usize,
    pub table: Vec<BicEntry>,
    pub best_model: TrainedAutoencoder,
}

/// Trains one model per candidate width (in parallel, same seed) and keeps the
/// BIC minimizer; ties go to the smaller width.
pub fn select_bottleneck(
    x: &DMatrix<f64>,
    candidates: &[usize],
    template: &AutoencoderTemplate,
) -> Result<BottleneckSelection> {
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::Config("no bottleneck candidates".into()));
    }
    let specs = ks
        .iter()
        .map(|&k| template.spec(x.ncols(), k))
        .collect::<Result<Vec<_>>>()?;
    let trained: Vec<Result<TrainedAutoencoder>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| scope.spawn(move || train_autoencoder(x, spec)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training("training thread panicked".into()))))
            .collect()
    });
    let trained = trained.into_iter().collect::<Result<Vec<_>>>()?;
    let n = x.nrows();
    let table: Vec<BicEntry> = ks
        .iter()
        .zip(&trained)
        .map(|(&k, t)| BicEntry {
            k,
            loss: t.final_loss,
            bic: bic(n, k, t.final_loss),
        })
        .collect();
    let mut best = 0;
    for (i, e) in table.iter().enumerate() {
        if e.bic < table[best].bic {
            best = i;
        }
    }
    Ok(BottleneckSelection {
        best_k: table[best].k,
        table,
        best_model: trained.into_iter().nth(best).unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_schedule_examples() {
        assert_eq!(geometric_layer_schedule(1170, 10, 3).unwrap(), vec![1170, 356, 108, 33, 10]);
        assert_eq!(geometric_layer_schedule(64, 4, 1).unwrap(), vec![64, 16, 4]);
        assert!(geometric_layer_schedule(100, 100, 0).is_err());
        // Rounding collapse: 5 → 4 in three hidden steps cannot stay strictly decreasing.
        assert!(geometric_layer_schedule(5, 4, 3).is_err());
    }

    #[test]
    fn bic_values() {
        assert!((bic(183, 10, 0.5) - (10.0 * 183f64.ln() + 183.0)).abs() < 1e-12);
        assert!((bic(183, 10, 0.5) - 235.094_861_5).abs() < 1e-6);
        assert_eq!(bic(1, 7, 0.0), 0.0);
        assert!((1..10).all(|k| bic(183, k + 1, 0.3) > bic(183, k, 0.3)));
    }

    #[test]
    fn mirror_symmetry() {
        let m = Autoencoder::initialize(&[12, 7, 3], 1);
        assert_eq!(m.decoder_sizes(), vec![3, 7, 12]);
        let widths: Vec<(usize, usize)> = m.layers().iter().map(|l| (l.w.ncols(), l.w.nrows())).collect();
        assert_eq!(widths, vec![(12, 7), (7, 3), (3, 7), (7, 12)]);
    }

    #[test]
    fn zero_net_gives_zero_code_and_identical_rows_match() {
        let z = Autoencoder::zeros(&[4, 2]);
        let code = z.encode(&DMatrix::zeros(1, 4)).unwrap();
        assert!(code.iter().all(|&v| v == 0.0));
        let m = Autoencoder::initialize(&[4, 3, 2], 5);
        let x = DMatrix::from_row_slice(2, 4, &[0.1, -0.2, 0.3, 0.4, 0.1, -0.2, 0.3, 0.4]);
        let c = m.encode(&x).unwrap();
        assert_eq!(c.row(0), c.row(1));
        assert!(matches!(m.encode(&DMatrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_input_trains_to_zero_loss() {
        let x = DMatrix::zeros(8, 5);
        let spec = AutoencoderSpec {
            layer_sizes: vec![5, 3, 2],
            seed: 0,
            epochs: 20,
            batch_size: 4,
            learning_rate: 0.1,
        };
        let t = train_autoencoder(&x, &spec).unwrap();
        assert!(t.final_loss < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let x = DMatrix::from_fn(16, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let spec = AutoencoderSpec {
            layer_sizes: vec![6, 4, 2],
            seed: 9,
            epochs: 30,
            batch_size: 4,
            learning_rate: 0.05,
        };
        let a = train_autoencoder(&x, &spec).unwrap();
        let b = train_autoencoder(&x, &spec).unwrap();
        assert_eq!(a.model.parameters(), b.model.parameters());
        assert!(a.final_loss <= a.history[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let x = DMatrix::from_fn(8, 4, |i, j| (i as f64 - 3.5) * (j as f64 + 1.0));
        let spec = AutoencoderSpec {
            layer_sizes: vec![4, 3, 2],
            seed: 1,
            epochs: 50,
            batch_size: 8,
            learning_rate: 50.0,
        };
        assert!(matches!(train_autoencoder(&x, &spec), Err(Error::Training(_))));
    }

    #[test]
    fn model_binary_round_trip() {
        let m = Autoencoder::initialize(&[6, 4, 2], 77);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text_end = buf.windows(5).position(|w| w == b"\nend\n").unwrap();
        assert!(std::str::from_utf8(&buf[..text_end]).unwrap().contains("layers 6 4 2"));
        let back = Autoencoder::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        buf.truncate(buf.len() - 3);
        assert!(Autoencoder::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn singleton_candidate_is_selected() {
        let x = DMatrix::from_fn(12, 5, |i, j| ((i + 2 * j) % 4) as f64 - 1.5);
        let template = AutoencoderTemplate {
            plan: LayerPlan::Explicit(vec![4]),
            seed: 0,
            epochs: 5,
            batch_size: 4,
            learning_rate: 0.01,
        };
        let sel = select_bottleneck(&x, &[2], &template).unwrap();
        assert_eq!(sel.best_k, 2);
        assert_eq!(sel.table.len(), 1);
    }
}
