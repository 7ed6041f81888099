//! Minimal dense feedforward networks with reverse-mode gradients and Adam.
//!
//! [`DenseNet`] is a chain of affine layers with pointwise activations,
//! enough for every distribution head in the correction model. Training code
//! binds a network onto a [`Tape`], composes an arbitrary scalar loss from
//! tape primitives, and reads parameter gradients back out; [`AdamState`]
//! applies the usual bias-corrected update.
//!
//! All math is 64-bit and forward passes are deterministic: identical inputs
//! and parameters give bitwise-identical outputs.

pub mod adam;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("parameter/gradient shape mismatch: {params} parameters vs {grads} gradients")]
    ShapeMismatch { params: usize, grads: usize },
    #[error("loss is not finite ({value}); refusing to run backward pass")]
    NonFiniteLoss { value: f64 },
    #[error("gradient is not finite at flat index {index}")]
    NonFiniteGradient { index: usize },
}

/// Pointwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Softplus => tape::softplus(x),
            Activation::Identity => x,
        }
    }
}

/// One dense layer: `y = activation(W x + b)`, row-major `(out_dim, in_dim)` weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Xavier-uniform initialization: `U(-l, l)` with `l = sqrt(6/(fan_in+fan_out))`.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights: weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }
}

/// A chain of dense layers; consecutive dimensions must agree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Self {
        assert!(!layers.is_empty(), "a network needs at least one layer");
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].out_dim, pair[1].in_dim,
                "consecutive layer dimensions must chain"
            );
        }
        Self { layers }
    }

    /// Builds a net from `dims = [in, h1, ..., out]` with `hidden_act` on all
    /// layers but the last, which uses `out_act`.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let act = if k + 2 == dims.len() { out_act } else { hidden_act };
                Layer::init(pair[0], pair[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Plain forward pass (no tape).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut cur = input.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let row = o * layer.in_dim;
                let mut acc = layer.bias[o];
                for i in 0..layer.in_dim {
                    acc += layer.weights[row + i] * cur[i];
                }
                next[o] = layer.activation.apply(acc);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Registers this net's parameters on `tape` so a loss can reach them.
    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                w: tape.leaf(l.weights.clone()),
                b: tape.leaf(l.bias.clone()),
                activation: l.activation,
            })
            .collect();
        BoundNet { layers }
    }

    /// Appends this net's parameters to a flat vector, weights then bias per layer.
    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    /// Reads this net's parameters back from a flat slice; returns the count consumed.
    pub fn read_flat(&mut self, vals: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&vals[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&vals[off..off + nb]);
            off += nb;
        }
        off
    }
}

/// Tape handles for one bound network.
pub struct BoundLayer {
    pub w: Var,
    pub b: Var,
    pub activation: Activation,
}

pub struct BoundNet {
    pub layers: Vec<BoundLayer>,
}

impl BoundNet {
    /// Forward pass recorded on the tape.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut cur = x;
        for layer in &self.layers {
            let z = tape.affine(layer.w, layer.b, cur);
            cur = match layer.activation {
                Activation::Relu => tape.relu(z),
                Activation::Softplus => tape.softplus(z),
                Activation::Identity => z,
            };
        }
        cur
    }

    /// Appends this net's gradients to `out` in `push_flat` order.
    pub fn push_grads(&self, grads: &Gradients, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(grads.wrt(layer.w));
            out.extend_from_slice(grads.wrt(layer.b));
        }
    }
}

/// Gradient of a scalar loss with respect to every parameter of `net`.
///
/// `loss_fn` receives the tape and the network output node and must return a
/// scalar node. Parameters the loss never touches keep a zero gradient; a
/// non-finite loss is an error before any backward work.
pub fn grad<F>(net: &DenseNet, input: &[f64], loss_fn: F) -> Result<Vec<f64>, NnError>
where
    F: FnOnce(&mut Tape, Var) -> Var,
{
    if input.len() != net.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: net.input_dim(),
            actual: input.len(),
        });
    }
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let x = tape.leaf(input.to_vec());
    let out = bound.forward(&mut tape, x);
    let loss = loss_fn(&mut tape, out);
    let grads = tape.backward(loss)?;
    let mut flat = Vec::with_capacity(net.param_count());
    bound.push_grads(&grads, &mut flat);
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn net_1x1(w: f64, b: f64, act: Activation) -> DenseNet {
        DenseNet::new(vec![Layer {
            in_dim: 1,
            out_dim: 1,
            weights: vec![w],
            bias: vec![b],
            activation: act,
        }])
    }

    #[test]
    fn forward_affine_arithmetic() {
        let net = net_1x1(2.0, 1.0, Activation::Identity);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_zero_weights_pass_biases_through_activations() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut net = DenseNet::init(&[4, 3, 2], Activation::Softplus, Activation::Identity, &mut rng);
        let mut flat = Vec::new();
        net.push_flat(&mut flat);
        // zero all weights, set distinctive biases
        let mut vals = vec![0.0; flat.len()];
        // layer 0: 4*3 weights then 3 biases; layer 1: 3*2 weights then 2 biases
        vals[12] = -1.0;
        vals[13] = 0.0;
        vals[14] = 2.0;
        vals[21] = 0.5;
        vals[22] = -0.5;
        net.read_flat(&vals);
        let out = net.forward(&[9.0, -3.0, 0.1, 4.0]).unwrap();
        // hidden = softplus([-1, 0, 2]) but with zero second-layer weights only biases remain
        assert_eq!(out, vec![0.5, -0.5]);
    }

    #[test]
    fn forward_identity_chain_is_identity() {
        let layers = vec![
            Layer {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
                activation: Activation::Identity,
            },
            Layer {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
                activation: Activation::Identity,
            },
        ];
        let net = DenseNet::new(layers);
        let v = vec![0.25, -7.5];
        assert_eq!(net.forward(&v).unwrap(), v);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = net_1x1(2.0, 1.0, Activation::Identity);
        match net.forward(&[1.0, 2.0]) {
            Err(NnError::DimensionMismatch { expected: 1, actual: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn grad_square_loss_by_hand() {
        // loss = (w*x - t)^2, w=1, x=2, t=0 => dloss/dw = 8
        let net = net_1x1(1.0, 0.0, Activation::Identity);
        let g = grad(&net, &[2.0], |tape, out| {
            let sq = tape.mul(out, out);
            tape.sum(sq)
        })
        .unwrap();
        assert_eq!(g, vec![8.0, 4.0]);
    }

    #[test]
    fn grad_constant_loss_is_all_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let net = DenseNet::init(&[3, 4, 2], Activation::Softplus, Activation::Identity, &mut rng);
        let g = grad(&net, &[0.3, -0.2, 1.0], |tape, _out| {
            let c = tape.leaf(vec![5.0]);
            tape.sum(c)
        })
        .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_non_finite_loss_rejected() {
        let net = net_1x1(1.0, 0.0, Activation::Identity);
        let res = grad(&net, &[2.0], |tape, out| {
            let inf = tape.leaf(vec![f64::INFINITY]);
            let s = tape.add(out, inf);
            tape.sum(s)
        });
        assert!(matches!(res, Err(NnError::NonFiniteLoss { .. })));
    }

    /// Central finite differences on a random softplus net: relative error
    /// below 1e-4 on at least 99% of coordinates (it is 100% in practice).
    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for trial in 0..5 {
            let net = DenseNet::init(
                &[3, 6, 5, 2],
                Activation::Softplus,
                Activation::Identity,
                &mut rng,
            );
            let input: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let target: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss_of = |n: &DenseNet| {
                let out = n.forward(&input).unwrap();
                out.iter()
                    .zip(target.iter())
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum::<f64>()
            };
            let tclone = target.clone();
            let analytic = grad(&net, &input, move |tape, out| {
                let t = tape.leaf(tclone);
                let d = tape.sub(out, t);
                let sq = tape.mul(d, d);
                tape.sum(sq)
            })
            .unwrap();

            let h = 1e-4;
            let mut flat = Vec::new();
            net.push_flat(&mut flat);
            let mut bad = 0;
            for p in 0..flat.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let mut vp = flat.clone();
                vp[p] += h;
                plus.read_flat(&vp);
                vp[p] = flat[p] - h;
                minus.read_flat(&vp);
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let denom = analytic[p].abs().max(fd.abs()).max(1.0);
                if (analytic[p] - fd).abs() / denom >= 1e-4 {
                    bad += 1;
                }
            }
            assert!(
                (bad as f64) <= 0.01 * flat.len() as f64,
                "trial {trial}: {bad}/{} coordinates off",
                flat.len()
            );
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let net = DenseNet::init(&[5, 8, 3], Activation::Softplus, Activation::Identity, &mut rng);
        let x = vec![0.1, -0.9, 2.0, 0.0, 0.5];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_forward_matches_plain_forward_bitwise() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let net = DenseNet::init(&[4, 5, 3], Activation::Softplus, Activation::Identity, &mut rng);
        let x = vec![0.4, -1.2, 0.0, 2.2];
        let plain = net.forward(&x).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let xv = tape.leaf(x);
        let out = bound.forward(&mut tape, xv);
        assert_eq!(tape.value(out), plain.as_slice());
    }
}
