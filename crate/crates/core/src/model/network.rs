//! Forward pass, recorded tape and exact reverse-mode gradients.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{gate, kernel, GraphContext};
use super::{CgrlConfig, CgrlParams, HeadParams, LayerParams};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softmax_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Apply dropout to layer inputs and attention coefficients.
    pub training: bool,
    /// Keep intermediates for `backward` and attention traces.
    pub record: bool,
    /// Seed of the dropout stream.
    pub seed: u64,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        ForwardOptions {
            training: false,
            record: false,
            seed: 0,
        }
    }

    pub fn train(seed: u64) -> Self {
        ForwardOptions {
            training: true,
            record: true,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
struct HeadTape<T> {
    /// Projected input `H W`, `Z x out`.
    p: Array2<T>,
    /// Squared projected distances per adjacency entry.
    d2: Vec<T>,
    /// Kernel values per adjacency entry.
    g: Vec<T>,
    /// Feature attention per adjacency entry.
    o: Vec<T>,
    /// Dropout scale per adjacency entry (`0` or `1 / (1 - p)`).
    drop: Option<Vec<T>>,
    r_o: T,
    eps: T,
    sigma: T,
}

/// Intermediates of one message-passing layer.
#[derive(Debug, Clone)]
pub struct LayerTape<T> {
    /// Layer input after dropout.
    input: Array2<T>,
    in_mask: Option<Array2<T>>,
    heads: Vec<HeadTape<T>>,
    /// Concatenated (hidden layers) or averaged (last layer) head outputs
    /// before the nonlinearity.
    pre: Array2<T>,
    last: bool,
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logits: Array2<T>,
    /// Row-wise class probabilities `[control, case]`.
    pub probs: Array2<T>,
    /// Final node representations fed to the output head.
    pub hidden: Array2<T>,
    tape: Option<Vec<LayerTape<T>>>,
}

/// Attention matrices of one head, each aligned with the adjacency entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HeadTrace<T: Scalar> {
    pub g: Vec<T>,
    pub o: Vec<T>,
    pub t: Vec<T>,
    pub delta: Vec<T>,
    pub r_o: T,
    pub r_t: T,
    pub epsilon: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttentionTrace<T: Scalar> {
    /// `(row, col)` of every adjacency entry.
    pub entries: Vec<(usize, usize)>,
    /// `layers[l][h]`.
    pub layers: Vec<Vec<HeadTrace<T>>>,
}

impl<T: Scalar> Forward<T> {
    pub fn is_recorded(&self) -> bool {
        self.tape.is_some()
    }

    /// Attention trace (pre-dropout `delta`); `None` unless recorded.
    pub fn trace(&self, ctx: &GraphContext<T>) -> Option<AttentionTrace<T>> {
        let tape = self.tape.as_ref()?;
        let t = ctx.structure();
        let layers = tape
            .iter()
            .map(|lt| {
                lt.heads
                    .iter()
                    .map(|ht| HeadTrace {
                        g: ht.g.clone(),
                        o: ht.o.clone(),
                        t: t.to_vec(),
                        delta: ht
                            .o
                            .iter()
                            .zip(t)
                            .map(|(&o, &t)| ht.r_o * o + (T::one() - ht.r_o) * t)
                            .collect(),
                        r_o: ht.r_o,
                        r_t: T::one() - ht.r_o,
                        epsilon: ht.eps,
                    })
                    .collect()
            })
            .collect();
        Some(AttentionTrace {
            entries: ctx.adjacency().entries().map(|(_, a, b)| (a, b)).collect(),
            layers,
        })
    }

    pub fn predicted(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|r| usize::from(r[1] > r[0]))
            .collect()
    }
}

fn standard<T: Scalar>(m: Array2<T>) -> Array2<T> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().to_owned()
    }
}

#[inline]
fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

#[inline]
fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

fn dropout_scale<T: Scalar>(rng: &mut ChaCha8Rng, p: f64) -> T {
    if rng.random::<f64>() < p {
        T::zero()
    } else {
        T::lit(1.0 / (1.0 - p))
    }
}

fn head_forward<T: Scalar>(
    input: &Array2<T>,
    hp: &HeadParams<T>,
    ctx: &GraphContext<T>,
    ablate: bool,
    dropout: Option<(&mut ChaCha8Rng, f64)>,
) -> (Array2<T>, HeadTape<T>) {
    let adj = ctx.adjacency();
    let (n, out) = (adj.n(), hp.w.ncols());
    let (rp, cols, mirror) = (adj.row_ptr(), adj.cols(), ctx.mirror());
    let p = standard(input.dot(&hp.w));
    let ps = p.as_slice().expect("standard layout");
    let sigma = hp.log_sigma.exp();
    let norm = kernel(T::zero(), sigma);
    let inv_two_s2 = T::one() / (T::lit(2.0) * sigma * sigma);
    let nnz = adj.nnz();
    let mut d2 = vec![T::zero(); nnz];
    let mut g = vec![T::zero(); nnz];
    for a in 0..n {
        let pa = &ps[a * out..(a + 1) * out];
        for k in rp[a]..rp[a + 1] {
            let b = cols[k];
            let dist = if b < a {
                d2[mirror[k]]
            } else {
                let pb = &ps[b * out..(b + 1) * out];
                pa.iter().zip(pb).map(|(&x, &y)| (x - y) * (x - y)).sum()
            };
            d2[k] = dist;
            g[k] = norm * (-dist * inv_two_s2).exp();
        }
    }
    let mut o = g.clone();
    for a in 0..n {
        softmax_in_place(&mut o[rp[a]..rp[a + 1]]);
    }
    let (r_o, eps) = if ablate {
        (T::one(), T::zero())
    } else {
        (gate(hp.s_o, hp.s_t).0, sigmoid(hp.eps_logit))
    };
    let drop = dropout.map(|(rng, rate)| {
        (0..nnz)
            .map(|_| dropout_scale::<T>(rng, rate))
            .collect::<Vec<T>>()
    });
    let t = ctx.structure();
    let r_t = T::one() - r_o;
    let mut result = Array2::zeros((n, out));
    {
        let rs = result.as_slice_mut().expect("standard layout");
        for a in 0..n {
            let row = &mut rs[a * out..(a + 1) * out];
            let self_w = eps / T::count(rp[a + 1] - rp[a]);
            for k in rp[a]..rp[a + 1] {
                let b = cols[k];
                let mut coef = r_o * o[k] + r_t * t[k];
                if let Some(d) = &drop {
                    coef *= d[k];
                }
                if a == b {
                    coef += self_w;
                }
                let pb = &ps[b * out..(b + 1) * out];
                for (y, &x) in row.iter_mut().zip(pb) {
                    *y += coef * x;
                }
            }
        }
    }
    let tape = HeadTape {
        p,
        d2,
        g,
        o,
        drop,
        r_o,
        eps,
        sigma,
    };
    (result, tape)
}

/// One conjoint message-passing layer over all nodes.
///
/// Per head, `h_a' = (delta_aa + eps / |Z_a|) W h_a + sum_{b != a} delta_ab W h_b`.
/// Hidden layers concatenate heads and apply ELU; the last layer averages heads.
pub fn layer_forward<T: Scalar>(
    h: &Array2<T>,
    ctx: &GraphContext<T>,
    lp: &LayerParams<T>,
    last: bool,
    ablate: bool,
    mut dropout: Option<(&mut ChaCha8Rng, f64)>,
) -> Result<(Array2<T>, LayerTape<T>)> {
    let n = ctx.n();
    let in_dim = lp.heads.first().map(|hp| hp.w.nrows()).unwrap_or(0);
    if h.nrows() != n || h.ncols() != in_dim {
        return Err(Error::ShapeError(format!(
            "layer input is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            n,
            in_dim
        )));
    }
    let (input, in_mask) = match dropout.as_mut() {
        Some((rng, rate)) if *rate > 0.0 => {
            let mask = Array2::from_shape_simple_fn(h.raw_dim(), || dropout_scale::<T>(rng, *rate));
            (h * &mask, Some(mask))
        }
        _ => (standard(h.to_owned()), None),
    };
    let rate = dropout.as_ref().map(|(_, r)| *r).filter(|&r| r > 0.0);
    let mut outs = Vec::with_capacity(lp.heads.len());
    let mut tapes = Vec::with_capacity(lp.heads.len());
    for hp in &lp.heads {
        let d = match (dropout.as_mut(), rate) {
            (Some((rng, _)), Some(r)) => Some((&mut **rng, r)),
            _ => None,
        };
        let (y, tape) = head_forward(&input, hp, ctx, ablate, d);
        outs.push(y);
        tapes.push(tape);
    }
    let out_dim = outs[0].ncols();
    let (pre, post) = if last {
        let mut mean = Array2::zeros((n, out_dim));
        for y in &outs {
            mean += y;
        }
        mean /= T::count(outs.len());
        (mean.clone(), mean)
    } else {
        let views: Vec<_> = outs.iter().map(|y| y.view()).collect();
        let cat = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        let cat = standard(cat);
        let act = cat.mapv(elu);
        (cat, act)
    };
    Ok((
        post,
        LayerTape {
            input,
            in_mask,
            heads: tapes,
            pre,
            last,
        },
    ))
}

/// Class probabilities `softmax(H W_y + b_y)`, row-wise.
pub fn predict<T: Scalar>(h: &Array2<T>, w_y: &Array2<T>, b_y: &Array1<T>) -> Array2<T> {
    let mut logits = standard(h.dot(w_y));
    logits += b_y;
    for mut row in logits.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    logits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CgrlModel<T: Scalar> {
    pub config: CgrlConfig,
    pub params: CgrlParams<T>,
}

impl<T: Scalar> CgrlModel<T> {
    pub fn new(config: CgrlConfig, input_dim: usize, seed: u64) -> Result<Self> {
        let params = CgrlParams::init(&config, input_dim, seed)?;
        Ok(CgrlModel { config, params })
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers[0].heads[0].w.nrows()
    }

    pub fn forward(
        &self,
        x: &Array2<T>,
        ctx: &GraphContext<T>,
        opts: ForwardOptions,
    ) -> Result<Forward<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let rate = if opts.training { self.config.dropout } else { 0.0 };
        let ablate = self.config.feature_attention_only;
        let depth = self.params.layers.len();
        let mut h = standard(x.to_owned());
        let mut tapes = Vec::with_capacity(depth);
        for (l, lp) in self.params.layers.iter().enumerate() {
            let d = (rate > 0.0).then_some((&mut rng, rate));
            let (next, tape) = layer_forward(&h, ctx, lp, l + 1 == depth, ablate, d)?;
            h = next;
            if opts.record {
                tapes.push(tape);
            }
        }
        let mut logits = standard(h.dot(&self.params.w_y));
        logits += &self.params.b_y;
        let mut probs = logits.clone();
        for mut row in probs.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(Forward {
            logits,
            probs,
            hidden: h,
            tape: opts.record.then_some(tapes),
        })
    }

    /// Gradients of a scalar loss given `d loss / d logits`, using the
    /// intermediates (including dropout masks) recorded by `forward`.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        ctx: &GraphContext<T>,
        d_logits: &Array2<T>,
    ) -> Result<CgrlParams<T>> {
        let tape = fwd.tape.as_ref().ok_or(Error::NoTape)?;
        if d_logits.dim() != fwd.logits.dim() {
            return Err(Error::ShapeError("logit gradient shape differs from logits".into()));
        }
        let ablate = self.config.feature_attention_only;
        let mut grads = self.params.zeros_like();
        grads.w_y = fwd.hidden.t().dot(d_logits);
        grads.b_y = d_logits.sum_axis(Axis(0));
        let mut dh = d_logits.dot(&self.params.w_y.t());

        for (l, lt) in tape.iter().enumerate().rev() {
            let lp = &self.params.layers[l];
            let heads = lp.heads.len();
            let out = lp.heads[0].w.ncols();
            let d_pre = if lt.last {
                dh / T::count(heads)
            } else {
                let mut d = dh;
                d.zip_mut_with(&lt.pre, |g, &x| *g *= elu_grad(x));
                d
            };
            let mut d_input = Array2::<T>::zeros(lt.input.raw_dim());
            for (h, (hp, ht)) in lp.heads.iter().zip(&lt.heads).enumerate() {
                let d_out = if lt.last {
                    d_pre.clone()
                } else {
                    standard(d_pre.slice(s![.., h * out..(h + 1) * out]).to_owned())
                };
                let hg = head_backward(hp, ht, ctx, &d_out, ablate);
                let g = &mut grads.layers[l].heads[h];
                g.w = lt.input.t().dot(&hg.d_p);
                g.s_o = hg.d_s_o;
                g.s_t = hg.d_s_t;
                g.log_sigma = hg.d_log_sigma;
                g.eps_logit = hg.d_eps_logit;
                d_input += &hg.d_p.dot(&hp.w.t());
            }
            if let Some(mask) = &lt.in_mask {
                d_input *= mask;
            }
            dh = d_input;
        }
        Ok(grads)
    }
}

struct HeadGrad<T> {
    d_p: Array2<T>,
    d_s_o: T,
    d_s_t: T,
    d_log_sigma: T,
    d_eps_logit: T,
}

fn head_backward<T: Scalar>(
    hp: &HeadParams<T>,
    ht: &HeadTape<T>,
    ctx: &GraphContext<T>,
    d_out: &Array2<T>,
    ablate: bool,
) -> HeadGrad<T> {
    let adj = ctx.adjacency();
    let (rp, cols) = (adj.row_ptr(), adj.cols());
    let t = ctx.structure();
    let out = hp.w.ncols();
    let ps = ht.p.as_slice().expect("standard layout");
    let ds = d_out.as_slice().expect("standard layout");
    let mut d_p = vec![T::zero(); ps.len()];
    let r_o = ht.r_o;
    let r_t = T::one() - r_o;
    let mut d_r_o = T::zero();
    let mut d_eps = T::zero();
    let mut d_o = vec![T::zero(); adj.nnz()];

    // aggregation: out_a = sum_k coef_k p_b
    for a in 0..adj.n() {
        let da = &ds[a * out..(a + 1) * out];
        let deg = T::count(rp[a + 1] - rp[a]);
        for k in rp[a]..rp[a + 1] {
            let b = cols[k];
            let delta = r_o * ht.o[k] + r_t * t[k];
            let m = ht.drop.as_ref().map_or(T::one(), |d| d[k]);
            let mut coef = delta * m;
            if a == b {
                coef += ht.eps / deg;
            }
            let pb = &ps[b * out..(b + 1) * out];
            let d_coef: T = da.iter().zip(pb).map(|(&x, &y)| x * y).sum();
            for (g, &x) in d_p[b * out..(b + 1) * out].iter_mut().zip(da) {
                *g += coef * x;
            }
            if a == b {
                d_eps += d_coef / deg;
            }
            let d_delta = d_coef * m;
            d_r_o += d_delta * (ht.o[k] - t[k]);
            d_o[k] = r_o * d_delta;
        }
    }

    // row softmax and Gaussian kernel
    let inv_s2 = T::one() / (ht.sigma * ht.sigma);
    let mut d_log_sigma = T::zero();
    for a in 0..adj.n() {
        let range = rp[a]..rp[a + 1];
        let dot: T = range.clone().map(|k| ht.o[k] * d_o[k]).sum();
        for k in range {
            let b = cols[k];
            let d_g = ht.o[k] * (d_o[k] - dot);
            let gk = d_g * ht.g[k];
            d_log_sigma += gk * (ht.d2[k] * inv_s2 - T::one());
            if a == b {
                continue;
            }
            // d g / d (d2) = -g / (2 sigma^2), d (d2) / d p_a = 2 (p_a - p_b)
            let scale = -gk * inv_s2;
            for j in 0..out {
                let diff = scale * (ps[a * out + j] - ps[b * out + j]);
                d_p[a * out + j] += diff;
                d_p[b * out + j] -= diff;
            }
        }
    }

    let (d_s_o, d_s_t, d_eps_logit) = if ablate {
        (T::zero(), T::zero(), T::zero())
    } else {
        let ds_o = d_r_o * r_o * r_t;
        (ds_o, -ds_o, d_eps * ht.eps * (T::one() - ht.eps))
    };
    HeadGrad {
        d_p: Array2::from_shape_vec(ht.p.raw_dim(), d_p).expect("same shape"),
        d_s_o,
        d_s_t,
        d_log_sigma,
        d_eps_logit,
    }
}
