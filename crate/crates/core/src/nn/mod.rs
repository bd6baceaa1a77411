//! Small feed-forward networks over flat parameter vectors, split into an
//! embedding trunk `g` and a linear classifier head `h`.

mod layers;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use layers::{Activation, Mode};
use layers::{Cache, Layer};

use crate::error::{Error, Result};

/// Architecture of the trunk. The head is always one linear layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Fully connected trunk with the given hidden widths.
    Mlp {
        hidden: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        batch_norm: bool,
    },
    /// Two conv-BN-ReLU-pool blocks followed by global average pooling.
    SmallCnn { channels: [usize; 2] },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::SmallCnn { channels: [32, 64] }
    }
}

impl ModelSpec {
    pub fn mlp(hidden: &[usize]) -> Self {
        ModelSpec::Mlp {
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            batch_norm: false,
        }
    }
}

/// Shape of one input example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputShape {
    Vector(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl InputShape {
    pub fn dim(&self) -> usize {
        match *self {
            InputShape::Vector(d) => d,
            InputShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

/// Intermediate activations kept for the backward pass.
pub struct Tape {
    caches: Vec<Cache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    input: InputShape,
    num_classes: usize,
    body: Vec<Layer>,
    head: Layer,
    embed_dim: usize,
    n_params: usize,
    n_buffers: usize,
}

struct Builder {
    layers: Vec<Layer>,
    params: usize,
    buffers: usize,
}

impl Builder {
    fn dense(&mut self, inp: usize, out: usize) -> Layer {
        let l = Layer::Dense {
            inp,
            out,
            w: self.params,
            b: self.params + inp * out,
        };
        self.params += l.num_params();
        l
    }

    fn push(&mut self, layer: Layer) {
        self.params += layer.num_params();
        self.buffers += layer.num_buffers();
        self.layers.push(layer);
    }

    fn batch_norm(&mut self, channels: usize, spatial: usize) {
        let (p, b) = (self.params, self.buffers);
        self.push(Layer::BatchNorm {
            channels,
            spatial,
            gamma: p,
            beta: p + channels,
            mean: b,
            var: b + channels,
        });
    }
}

impl Network {
    pub fn new(spec: &ModelSpec, input: InputShape, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {num_classes}")));
        }
        let mut bld = Builder {
            layers: Vec::new(),
            params: 0,
            buffers: 0,
        };
        let mut dim = input.dim();
        match spec {
            ModelSpec::Mlp {
                hidden,
                activation,
                batch_norm,
            } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::config(
                        "mlp hidden widths must be a non-empty list of positive sizes",
                    ));
                }
                for &h in hidden {
                    let l = bld.dense(dim, h);
                    bld.layers.push(l);
                    if *batch_norm {
                        bld.batch_norm(h, 1);
                    }
                    bld.layers.push(Layer::Act(*activation));
                    dim = h;
                }
            }
            ModelSpec::SmallCnn { channels } => {
                let InputShape::Image {
                    channels: mut cin,
                    mut height,
                    mut width,
                } = input
                else {
                    return Err(Error::config("small_cnn needs image inputs"));
                };
                if channels.contains(&0) {
                    return Err(Error::config("small_cnn channel counts must be positive"));
                }
                for &cout in channels {
                    if height < 2 || width < 2 {
                        return Err(Error::config("image too small for two pooling stages"));
                    }
                    let p = bld.params;
                    bld.push(Layer::Conv3x3 {
                        cin,
                        cout,
                        height,
                        width,
                        w: p,
                        b: p + cout * cin * 9,
                    });
                    bld.batch_norm(cout, height * width);
                    bld.push(Layer::Act(Activation::Relu));
                    bld.push(Layer::MaxPool2 {
                        channels: cout,
                        height,
                        width,
                    });
                    cin = cout;
                    height /= 2;
                    width /= 2;
                }
                bld.push(Layer::GlobalAvgPool {
                    channels: cin,
                    spatial: height * width,
                });
                dim = cin;
            }
        }
        let head = bld.dense(dim, num_classes);
        Ok(Network {
            spec: spec.clone(),
            input,
            num_classes,
            body: bld.layers,
            head,
            embed_dim: dim,
            n_params: bld.params,
            n_buffers: bld.buffers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn num_buffers(&self) -> usize {
        self.n_buffers
    }

    /// He-normal weights, zero biases, unit BN scale; running variance 1.
    pub fn init(&self, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.n_params];
        let mut buffers = vec![0.0; self.n_buffers];
        let mut fill = |off: usize, len: usize, fan_in: usize, gain: f64, params: &mut [f64]| {
            let n = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            for v in &mut params[off..off + len] {
                *v = n.sample(&mut rng);
            }
        };
        for l in &self.body {
            match *l {
                Layer::Dense { inp, out, w, .. } => fill(w, inp * out, inp, 2.0, &mut params),
                Layer::Conv3x3 { cin, cout, w, .. } => fill(w, cout * cin * 9, cin * 9, 2.0, &mut params),
                Layer::BatchNorm {
                    channels, gamma, var, ..
                } => {
                    params[gamma..gamma + channels].fill(1.0);
                    buffers[var..var + channels].fill(1.0);
                }
                _ => {}
            }
        }
        if let Layer::Dense { inp, out, w, .. } = self.head {
            fill(w, inp * out, inp, 1.0, &mut params);
        }
        (params, buffers)
    }

    fn check(&self, params: &[f64], x: &Array2<f64>) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::shape(format!(
                "{} parameters, network has {}",
                params.len(),
                self.n_params
            )));
        }
        if x.ncols() != self.input.dim() {
            return Err(Error::shape(format!(
                "inputs have {} features, network expects {}",
                x.ncols(),
                self.input.dim()
            )));
        }
        Ok(())
    }

    /// Training-mode trunk forward. Normalization layers use the statistics
    /// of `x` as a whole and update their running buffers.
    pub fn embed_train(&self, params: &[f64], buffers: &mut [f64], x: &Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check(params, x)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.body.len());
        for l in &self.body {
            let (y, c) = l.forward(params, Some(&mut *buffers), h, Mode::Train);
            caches.push(c);
            h = y;
        }
        Ok((h, Tape { caches }))
    }

    pub fn embed_eval(&self, params: &[f64], buffers: &[f64], x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(params, x)?;
        let mut scratch = buffers.to_vec();
        let mut h = x.clone();
        for l in &self.body {
            h = l.forward(params, Some(&mut scratch), h, Mode::Eval).0;
        }
        Ok(h)
    }

    /// Head logits for embeddings `z`.
    pub fn classify(&self, params: &[f64], z: &Array2<f64>) -> Array2<f64> {
        self.head.forward(params, None, z.clone(), Mode::Eval).0
    }

    /// Gradient of the head: accumulates into `grad`, returns `dL/dz`.
    pub fn backward_head(
        &self,
        params: &[f64],
        z: &Array2<f64>,
        dlogits: Array2<f64>,
        grad: &mut [f64],
    ) -> Array2<f64> {
        self.head.backward(params, &Cache::Input(z.clone()), dlogits, grad)
    }

    pub fn backward_embed(&self, params: &[f64], tape: &Tape, dz: Array2<f64>, grad: &mut [f64]) {
        let mut d = dz;
        for (l, c) in self.body.iter().zip(&tape.caches).rev() {
            d = l.backward(params, c, d, grad);
        }
    }

    /// Class probabilities in evaluation mode.
    pub fn predict(&self, params: &[f64], buffers: &[f64], x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.embed_eval(params, buffers, x)?;
        Ok(softmax(&self.classify(params, &z)))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Pull `dL/dp` back through the softmax: `p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner = (p * dp).sum_axis(Axis(1));
    let mut out = dp.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row -= inner[i];
    }
    out * p
}

/// Stack feature vectors into a row matrix.
pub fn stack_features(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::shape(format!("row {i} has {} features, expected {d}", r.len())));
        }
        out.row_mut(i).assign(&ndarray::ArrayView1::from(r.as_slice()));
    }
    Ok(out)
}
