//! Multilayer perceptron with a tanh trunk, categorical policy heads and a
//! scalar value head, with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector. Each dense layer occupies a weight
//! block (row-major, `out x in`) followed by its bias. Trunk layers come
//! first, then the policy heads in order, then the value head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    /// Category count of each policy head.
    pub heads: Vec<usize>,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, heads: Vec<usize>) -> Result<Self> {
        if input == 0
            || hidden.is_empty()
            || hidden.contains(&0)
            || heads.is_empty()
            || heads.contains(&0)
        {
            return Err(Error::Config(format!(
                "invalid network shape: input {input}, hidden {hidden:?}, heads {heads:?}"
            )));
        }
        Ok(Self {
            input,
            hidden,
            heads,
        })
    }

    /// `(fan_in, fan_out)` of every dense layer in parameter order.
    fn layers(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            out.push((prev, h));
            prev = h;
        }
        out.extend(self.heads.iter().map(|&k| (prev, k)));
        out.push((prev, 1));
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the weight block; the bias follows it.
    offset: usize,
}

impl Dense {
    fn bias(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }

    fn apply(&self, params: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &params[self.offset..self.bias()];
        let b = &params[self.bias()..self.bias() + self.fan_out];
        for (row, &bias) in w.chunks_exact(self.fan_in).zip(b) {
            out.push(bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients for upstream gradient `dy` and input
    /// `x`; adds the input gradient to `dx` when given.
    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let bias = self.bias();
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[self.offset + o * self.fan_in..self.offset + (o + 1) * self.fan_in];
            for (r, &xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
            grad[bias + o] += g;
        }
        if let Some(dx) = dx {
            let w = &params[self.offset..bias];
            for (row, &g) in w.chunks_exact(self.fan_in).zip(dy) {
                for (d, &wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input followed by each trunk layer's tanh output.
    activations: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub value: f64,
}

impl Forward {
    fn features(&self) -> &[f64] {
        self.activations.last().expect("input is always stored")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    arch: Architecture,
    trunk: Vec<Dense>,
    heads: Vec<Dense>,
    value: Dense,
    pub params: Vec<f64>,
}

impl PolicyValueNet {
    /// All parameters zero.
    pub fn zeros(arch: Architecture) -> Self {
        let mut offset = 0;
        let mut dense: Vec<Dense> = arch
            .layers()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let d = Dense {
                    fan_in,
                    fan_out,
                    offset,
                };
                offset += fan_in * fan_out + fan_out;
                d
            })
            .collect();
        let value = dense.pop().expect("value layer");
        let heads = dense.split_off(arch.hidden.len());
        Self {
            trunk: dense,
            heads,
            value,
            params: vec![0.0; offset],
            arch,
        }
    }

    /// Scaled uniform init with variance `gain^2 / fan_in`: gain sqrt(2) in
    /// the trunk, `head_gain` on the policy heads, 1 on the value head.
    /// Biases start at zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, head_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let gains = std::iter::repeat_n(std::f64::consts::SQRT_2, net.trunk.len())
            .chain(std::iter::repeat_n(head_gain, net.heads.len()))
            .chain([1.0]);
        let layers: Vec<Dense> = net
            .trunk
            .iter()
            .chain(&net.heads)
            .chain([&net.value])
            .copied()
            .collect();
        for (d, gain) in layers.iter().zip(gains) {
            let a = gain * (3.0 / d.fan_in as f64).sqrt();
            for w in &mut net.params[d.offset..d.bias()] {
                *w = rng.random_range(-a..=a);
            }
        }
        net
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch);
        if params.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn forward(&self, state: &[f64]) -> Result<Forward> {
        if state.len() != self.arch.input {
            return Err(Error::Domain(format!(
                "state has {} components, network expects {}",
                state.len(),
                self.arch.input
            )));
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite state {state:?}")));
        }
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(state.to_vec());
        for d in &self.trunk {
            let mut h = Vec::with_capacity(d.fan_out);
            d.apply(&self.params, activations.last().expect("non-empty"), &mut h);
            h.iter_mut().for_each(|x| *x = x.tanh());
            activations.push(h);
        }
        let feat = activations.last().expect("non-empty");
        let logits = self
            .heads
            .iter()
            .map(|d| {
                let mut z = Vec::with_capacity(d.fan_out);
                d.apply(&self.params, feat, &mut z);
                z
            })
            .collect();
        let mut v = Vec::with_capacity(1);
        self.value.apply(&self.params, feat, &mut v);
        Ok(Forward {
            activations,
            logits,
            value: v[0],
        })
    }

    /// Adds to `grad` the gradient of a loss whose derivatives with respect
    /// to this pass's logits and value are `dlogits` and `dvalue`.
    pub fn backward(&self, fwd: &Forward, dlogits: &[Vec<f64>], dvalue: f64, grad: &mut [f64]) {
        let feat = fwd.features();
        let mut dh = vec![0.0; feat.len()];
        for (d, dz) in self.heads.iter().zip(dlogits) {
            d.backward(&self.params, feat, dz, grad, Some(&mut dh));
        }
        self.value
            .backward(&self.params, feat, &[dvalue], grad, Some(&mut dh));
        for (i, d) in self.trunk.iter().enumerate().rev() {
            let y = &fwd.activations[i + 1];
            let dz: Vec<f64> = dh.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
            let x = &fwd.activations[i];
            if i == 0 {
                d.backward(&self.params, x, &dz, grad, None);
            } else {
                let mut dx = vec![0.0; x.len()];
                d.backward(&self.params, x, &dz, grad, Some(&mut dx));
                dh = dx;
            }
        }
    }
}
