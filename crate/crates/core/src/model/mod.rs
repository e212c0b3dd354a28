//! Conjoint graph representation learning model.
//!
//! Each message-passing layer blends two attention distributions over a
//! node's neighbourhood `Z_a` (which always contains `a`):
//!
//! * feature attention `o`: softmax of a Gaussian kernel on projected features,
//! * structure attention `t`: softmax of the learned structural intervention `C`,
//!
//! mixed by a two-logit gate into `delta = r_o * o + r_t * t`, then aggregates
//! projected neighbour features with an extra learnable self weight
//! `epsilon / |Z_a|`. A linear softmax head produces class probabilities.

mod attention;
mod network;
mod structural;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use attention::{conjoint_attention, gaussian_affinity, structure_attention, GraphContext};
pub use network::{
    layer_forward, predict, AttentionTrace, CgrlModel, Forward, ForwardOptions, HeadTrace,
    LayerTape,
};
pub use structural::{fit_structural_intervention, StructuralFit, StructuralFitOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgrlConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Rank `k` of the structural factor `V`.
    pub struct_rank: usize,
    pub sigma_init: f64,
    /// Pre-sigmoid initial value of `epsilon`.
    pub epsilon_init: f64,
    /// Ablation: structure gate closed (`r_t = 0`) and `epsilon = 0`, leaving
    /// a pure feature-attention aggregator.
    pub feature_attention_only: bool,
}

impl Default for CgrlConfig {
    fn default() -> Self {
        CgrlConfig {
            layers: 2,
            hidden: 128,
            heads: 8,
            dropout: 0.06,
            struct_rank: 8,
            sigma_init: 1.0,
            epsilon_init: 0.0,
            feature_attention_only: false,
        }
    }
}

impl CgrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.hidden == 0 || self.heads == 0 || self.struct_rank == 0 {
            return Err(Error::Config("hidden, heads and struct_rank must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.sigma_init > 0.0) || !self.epsilon_init.is_finite() {
            return Err(Error::Config("sigma_init must be > 0 and epsilon_init finite".into()));
        }
        Ok(())
    }

    /// `(input, per-head output)` dimensions of layer `l`.
    pub fn layer_dims(&self, input_dim: usize, l: usize) -> (usize, usize) {
        let in_dim = if l == 0 { input_dim } else { self.hidden * self.heads };
        (in_dim, self.hidden)
    }

    pub fn ablation(&self) -> Self {
        CgrlConfig {
            feature_attention_only: true,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HeadParams<T: Scalar> {
    /// Projection, `in x out`; rows are applied as `h W`.
    pub w: Array2<T>,
    pub s_o: T,
    pub s_t: T,
    /// `sigma = exp(log_sigma)`.
    pub log_sigma: T,
    /// `epsilon = sigmoid(eps_logit)`.
    pub eps_logit: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerParams<T: Scalar> {
    pub heads: Vec<HeadParams<T>>,
}

/// Every learnable tensor of the network. The same layout doubles as the
/// gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CgrlParams<T: Scalar> {
    pub layers: Vec<LayerParams<T>>,
    /// Output head, `hidden x 2`.
    pub w_y: Array2<T>,
    pub b_y: Array1<T>,
}

fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-limit..limit)))
}

impl<T: Scalar> CgrlParams<T> {
    /// Glorot-uniform projections, open gates (`r_o = r_t = 1/2`), `sigma = sigma_init`.
    pub fn init(config: &CgrlConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.layers)
            .map(|l| {
                let (i, o) = config.layer_dims(input_dim, l);
                LayerParams {
                    heads: (0..config.heads)
                        .map(|_| HeadParams {
                            w: glorot(i, o, &mut rng),
                            s_o: T::zero(),
                            s_t: T::zero(),
                            log_sigma: T::lit(config.sigma_init.ln()),
                            eps_logit: T::lit(config.epsilon_init),
                        })
                        .collect(),
                }
            })
            .collect();
        Ok(CgrlParams {
            layers,
            w_y: glorot(config.hidden, 2, &mut rng),
            b_y: Array1::zeros(2),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|s| s.iter_mut().for_each(|x| *x = T::zero()));
        z
    }

    /// Visits every parameter tensor in a fixed order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                f(h.w.as_slice_mut().expect("standard layout"));
                f(std::slice::from_mut(&mut h.s_o));
                f(std::slice::from_mut(&mut h.s_t));
                f(std::slice::from_mut(&mut h.log_sigma));
                f(std::slice::from_mut(&mut h.eps_logit));
            }
        }
        f(self.w_y.as_slice_mut().expect("standard layout"));
        f(self.b_y.as_slice_mut().expect("standard layout"));
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        let mut me = self.clone();
        me.for_each_mut(|s| out.extend_from_slice(s));
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let mut pos = 0;
        self.for_each_mut(|s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        });
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }

    pub fn len(&self) -> usize {
        self.to_flat().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Names aligned with [`to_flat`](Self::to_flat), for diagnostics.
    pub fn flat_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (h, hp) in layer.heads.iter().enumerate() {
                for k in 0..hp.w.len() {
                    names.push(format!("layer{l}.head{h}.w[{k}]"));
                }
                for n in ["s_o", "s_t", "log_sigma", "eps_logit"] {
                    names.push(format!("layer{l}.head{h}.{n}"));
                }
            }
        }
        for k in 0..self.w_y.len() {
            names.push(format!("w_y[{k}]"));
        }
        names.push("b_y[0]".into());
        names.push("b_y[1]".into());
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes() {
        let cfg = CgrlConfig {
            hidden: 4,
            heads: 3,
            ..Default::default()
        };
        let p = CgrlParams::<f64>::init(&cfg, 10, 1).unwrap();
        assert_eq!(p.layers[0].heads[0].w.dim(), (10, 4));
        assert_eq!(p.layers[1].heads[2].w.dim(), (12, 4));
        assert_eq!(p.w_y.dim(), (4, 2));
        assert_eq!(p.flat_names().len(), p.len());
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
    }

    #[test]
    fn config_rejects_full_dropout() {
        let cfg = CgrlConfig {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
