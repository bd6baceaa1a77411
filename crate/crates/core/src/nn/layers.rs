use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub(crate) const BN_MOMENTUM: f64 = 0.1;
pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization; running buffers are updated.
    Train,
    /// Running statistics; buffers are read only.
    Eval,
}

/// A layer and the offsets of its parameters in the flat vector.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Dense {
        inp: usize,
        out: usize,
        w: usize,
        b: usize,
    },
    Act(Activation),
    /// Per-channel normalization over batch and spatial positions.
    BatchNorm {
        channels: usize,
        spatial: usize,
        gamma: usize,
        beta: usize,
        mean: usize,
        var: usize,
    },
    /// 3×3 convolution, stride 1, zero padding 1, CHW features.
    Conv3x3 {
        cin: usize,
        cout: usize,
        height: usize,
        width: usize,
        w: usize,
        b: usize,
    },
    MaxPool2 {
        channels: usize,
        height: usize,
        width: usize,
    },
    GlobalAvgPool {
        channels: usize,
        spatial: usize,
    },
}

pub(crate) enum Cache {
    Input(Array2<f64>),
    Output(Array2<f64>),
    Norm { x_hat: Array2<f64>, inv_std: Vec<f64> },
    Cols(Array2<f64>),
    Argmax(Vec<usize>),
    None,
}

fn view2(buf: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &buf[off..off + rows * cols]).expect("parameter slice")
}

fn add_into(dst: &mut [f64], off: usize, src: impl IntoIterator<Item = f64>) {
    for (d, s) in dst[off..].iter_mut().zip(src) {
        *d += s;
    }
}

impl Layer {
    pub(crate) fn num_params(&self) -> usize {
        match *self {
            Layer::Dense { inp, out, .. } => inp * out + out,
            Layer::BatchNorm { channels, .. } => 2 * channels,
            Layer::Conv3x3 { cin, cout, .. } => cout * cin * 9 + cout,
            _ => 0,
        }
    }

    pub(crate) fn num_buffers(&self) -> usize {
        match *self {
            Layer::BatchNorm { channels, .. } => 2 * channels,
            _ => 0,
        }
    }

    pub(crate) fn forward(
        &self,
        params: &[f64],
        buffers: Option<&mut [f64]>,
        x: Array2<f64>,
        mode: Mode,
    ) -> (Array2<f64>, Cache) {
        match *self {
            Layer::Dense { inp, out, w, b } => {
                let wm = view2(params, w, out, inp);
                let bias = &params[b..b + out];
                let mut y = x.dot(&wm.t());
                for mut row in y.rows_mut() {
                    for (v, bb) in row.iter_mut().zip(bias) {
                        *v += bb;
                    }
                }
                (y, Cache::Input(x))
            }
            Layer::Act(a) => {
                let y = match a {
                    Activation::Relu => x.mapv(|v| v.max(0.0)),
                    Activation::Tanh => x.mapv(f64::tanh),
                };
                (y.clone(), Cache::Output(y))
            }
            Layer::BatchNorm {
                channels,
                spatial,
                gamma,
                beta,
                mean,
                var,
            } => batch_norm_forward(params, buffers, x, mode, channels, spatial, [gamma, beta, mean, var]),
            Layer::Conv3x3 {
                cin,
                cout,
                height,
                width,
                w,
                b,
            } => {
                let n = x.nrows();
                let hw = height * width;
                let cols = im2col(&x, cin, height, width);
                let wm = view2(params, w, cout, cin * 9);
                let res = cols.dot(&wm.t());
                let mut y = Array2::zeros((n, cout * hw));
                for i in 0..n {
                    for p in 0..hw {
                        for co in 0..cout {
                            y[[i, co * hw + p]] = res[[i * hw + p, co]] + params[b + co];
                        }
                    }
                }
                (y, Cache::Cols(cols))
            }
            Layer::MaxPool2 {
                channels,
                height,
                width,
            } => {
                let (oh, ow) = (height / 2, width / 2);
                let n = x.nrows();
                let mut y = Array2::zeros((n, channels * oh * ow));
                let mut arg = vec![0; n * channels * oh * ow];
                for i in 0..n {
                    for c in 0..channels {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut at = 0;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    let idx = c * height * width + (2 * oy + dy) * width + 2 * ox + dx;
                                    if x[[i, idx]] > best {
                                        best = x[[i, idx]];
                                        at = idx;
                                    }
                                }
                                let o = c * oh * ow + oy * ow + ox;
                                y[[i, o]] = best;
                                arg[i * channels * oh * ow + o] = at;
                            }
                        }
                    }
                }
                (y, Cache::Argmax(arg))
            }
            Layer::GlobalAvgPool { channels, spatial } => {
                let n = x.nrows();
                let mut y = Array2::zeros((n, channels));
                for i in 0..n {
                    for c in 0..channels {
                        y[[i, c]] = x.slice(s![i, c * spatial..(c + 1) * spatial]).sum() / spatial as f64;
                    }
                }
                (y, Cache::None)
            }
        }
    }

    /// Accumulate parameter gradients into `grad` and return the input
    /// gradient.
    pub(crate) fn backward(&self, params: &[f64], cache: &Cache, dy: Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
        match (self, cache) {
            (&Layer::Dense { inp, out, w, b }, Cache::Input(x)) => {
                let dw = dy.t().dot(x);
                add_into(grad, w, dw.iter().copied());
                add_into(grad, b, dy.sum_axis(Axis(0)));
                dy.dot(&view2(params, w, out, inp))
            }
            (&Layer::Act(a), Cache::Output(y)) => {
                let mut dx = dy;
                match a {
                    Activation::Relu => dx.zip_mut_with(y, |d, &v| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    }),
                    Activation::Tanh => dx.zip_mut_with(y, |d, &v| *d *= 1.0 - v * v),
                }
                dx
            }
            (
                &Layer::BatchNorm {
                    channels,
                    spatial,
                    gamma,
                    beta,
                    ..
                },
                Cache::Norm { x_hat, inv_std },
            ) => {
                let n = dy.nrows();
                let m = (n * spatial) as f64;
                let mut dx = Array2::zeros(dy.dim());
                for c in 0..channels {
                    let cols = c * spatial..(c + 1) * spatial;
                    let dyc = dy.slice(s![.., cols.clone()]);
                    let xh = x_hat.slice(s![.., cols.clone()]);
                    let dbeta = dyc.sum();
                    let dgamma = (&dyc * &xh).sum();
                    grad[gamma + c] += dgamma;
                    grad[beta + c] += dbeta;
                    let g = params[gamma + c] * inv_std[c];
                    // batch statistics depend on every input
                    dx.slice_mut(s![.., cols])
                        .assign(&((&dyc - dbeta / m - &xh * (dgamma / m)) * g));
                }
                dx
            }
            (
                &Layer::Conv3x3 {
                    cin,
                    cout,
                    height,
                    width,
                    w,
                    b,
                },
                Cache::Cols(cols),
            ) => {
                let n = dy.nrows();
                let hw = height * width;
                let mut dres = Array2::zeros((n * hw, cout));
                for i in 0..n {
                    for p in 0..hw {
                        for co in 0..cout {
                            dres[[i * hw + p, co]] = dy[[i, co * hw + p]];
                        }
                    }
                }
                add_into(grad, w, dres.t().dot(cols).iter().copied());
                add_into(grad, b, dres.sum_axis(Axis(0)));
                let dcols = dres.dot(&view2(params, w, cout, cin * 9));
                col2im(&dcols, n, cin, height, width)
            }
            (
                &Layer::MaxPool2 {
                    channels,
                    height,
                    width,
                },
                Cache::Argmax(arg),
            ) => {
                let n = dy.nrows();
                let per = dy.ncols();
                let mut dx = Array2::zeros((n, channels * height * width));
                for i in 0..n {
                    for o in 0..per {
                        dx[[i, arg[i * per + o]]] += dy[[i, o]];
                    }
                }
                dx
            }
            (&Layer::GlobalAvgPool { channels, spatial }, Cache::None) => {
                let n = dy.nrows();
                let mut dx = Array2::zeros((n, channels * spatial));
                for i in 0..n {
                    for c in 0..channels {
                        let g = dy[[i, c]] / spatial as f64;
                        dx.slice_mut(s![i, c * spatial..(c + 1) * spatial]).fill(g);
                    }
                }
                dx
            }
            _ => unreachable!("layer/cache mismatch"),
        }
    }
}

fn batch_norm_forward(
    params: &[f64],
    buffers: Option<&mut [f64]>,
    x: Array2<f64>,
    mode: Mode,
    channels: usize,
    spatial: usize,
    [gamma, beta, mean, var]: [usize; 4],
) -> (Array2<f64>, Cache) {
    let n = x.nrows();
    let m = (n * spatial) as f64;
    let mut y = Array2::zeros(x.dim());
    let mut x_hat = Array2::zeros(x.dim());
    let mut inv_std = vec![0.0; channels];
    let mut buffers = buffers;
    for c in 0..channels {
        let cols = c * spatial..(c + 1) * spatial;
        let xc = x.slice(s![.., cols.clone()]);
        let (mu, v) = match mode {
            Mode::Train => {
                let mu = xc.sum() / m;
                let v = xc.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / m;
                if let Some(buf) = buffers.as_deref_mut() {
                    let unbiased = if m > 1.0 { v * m / (m - 1.0) } else { v };
                    buf[mean + c] = (1.0 - BN_MOMENTUM) * buf[mean + c] + BN_MOMENTUM * mu;
                    buf[var + c] = (1.0 - BN_MOMENTUM) * buf[var + c] + BN_MOMENTUM * unbiased;
                }
                (mu, v)
            }
            Mode::Eval => {
                let buf = buffers.as_deref().expect("eval-mode batch norm needs buffers");
                (buf[mean + c], buf[var + c])
            }
        };
        inv_std[c] = 1.0 / (v + BN_EPS).sqrt();
        let xh = xc.mapv(|a| (a - mu) * inv_std[c]);
        y.slice_mut(s![.., cols.clone()])
            .assign(&xh.mapv(|h| params[gamma + c] * h + params[beta + c]));
        x_hat.slice_mut(s![.., cols]).assign(&xh);
    }
    match mode {
        Mode::Train => (y, Cache::Norm { x_hat, inv_std }),
        Mode::Eval => (y, Cache::None),
    }
}

fn im2col(x: &Array2<f64>, cin: usize, height: usize, width: usize) -> Array2<f64> {
    let n = x.nrows();
    let hw = height * width;
    let mut cols = Array2::zeros((n * hw, cin * 9));
    for i in 0..n {
        for y in 0..height {
            for xx in 0..width {
                let r = i * hw + y * width + xx;
                for c in 0..cin {
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= height as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= width as isize {
                                continue;
                            }
                            cols[[r, c * 9 + ky * 3 + kx]] = x[[i, c * hw + sy as usize * width + sx as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, n: usize, cin: usize, height: usize, width: usize) -> Array2<f64> {
    let hw = height * width;
    let mut dx = Array2::zeros((n, cin * hw));
    for i in 0..n {
        for y in 0..height {
            for xx in 0..width {
                let r = i * hw + y * width + xx;
                for c in 0..cin {
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= height as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= width as isize {
                                continue;
                            }
                            dx[[i, c * hw + sy as usize * width + sx as usize]] += dcols[[r, c * 9 + ky * 3 + kx]];
                        }
                    }
                }
            }
        }
    }
    dx
}
