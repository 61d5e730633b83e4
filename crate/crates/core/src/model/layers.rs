use candle_core::{DType, Tensor, Var, D};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, ParamStore};

/// Forward-pass mode. Dropout is active only in training mode and draws its
/// masks from the supplied generator.
pub struct Forward<'a> {
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Forward<'a> {
    pub fn eval() -> Self {
        Self { rng: None }
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Self { rng: Some(rng) }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, x: &Tensor, p: f64) -> Result<Tensor, ModelError> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x.clone());
        };
        if p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..x.elem_count())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok(x.mul(&mask)?)
    }
}

/// A parameter as seen by the forward pass. Frozen parameters are detached
/// so no gradient is ever computed for them.
pub fn param(var: &Var, frozen: bool) -> Tensor {
    if frozen {
        var.as_tensor().detach()
    } else {
        var.as_tensor().clone()
    }
}

/// Affine map with weight stored as `(out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, std: f64, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        Ok(Self {
            weight: store.normal(&format!("{name}.weight"), &[output, input], std, rng)?,
            bias: store.zeros(&format!("{name}.bias"), &[output])?,
        })
    }

    pub fn out_features(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor, ModelError> {
        let w = param(&self.weight, frozen);
        let b = param(&self.bias, frozen);
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("linear input has a feature dimension");
        let rows = x.elem_count() / input;
        let y = x.reshape((rows, input))?.matmul(&w.t()?)?.broadcast_add(&b)?;
        let mut out_dims = dims;
        *out_dims.last_mut().expect("non-empty") = self.out_features();
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub weight: Var,
    pub bias: Var,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, size: usize, eps: f64) -> Result<Self, ModelError> {
        Ok(Self {
            weight: store.ones(&format!("{name}.weight"), &[size])?,
            bias: store.zeros(&format!("{name}.bias"), &[size])?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor, frozen: bool) -> Result<Tensor, ModelError> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&param(&self.weight, frozen))?.broadcast_add(&param(&self.bias, frozen))?)
    }
}

/// Softmax over the last dimension; the max shift is detached since it
/// does not change the result.
pub fn softmax_last(x: &Tensor) -> Result<Tensor, ModelError> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor, ModelError> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Additive attention bias `(batch, 1, 1, len)`: 0 on real tokens, a large
/// negative value on padding.
pub fn mask_bias(mask: &[u32], batch: usize, len: usize, dtype: DType, device: &candle_core::Device) -> Result<Tensor, ModelError> {
    let bias: Vec<f64> = mask.iter().map(|&m| if m == 1 { 0.0 } else { -1e9 }).collect();
    Ok(Tensor::from_vec(bias, (batch, 1, 1, len), device)?.to_dtype(dtype)?)
}
