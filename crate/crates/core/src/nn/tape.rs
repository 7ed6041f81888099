//! Reverse-mode gradient tape over vector-valued primitives.
//!
//! A [`Tape`] records every primitive operation of a forward pass together
//! with its saved output. Calling [`Tape::backward`] on a scalar node replays
//! the record in reverse and accumulates a gradient for every node touched in
//! the forward pass; nodes the loss never reached keep a zero gradient.
//!
//! The op set is deliberately small: affine maps, pointwise activations and
//! arithmetic, concatenation, clamping, and (masked) sums. That is enough to
//! express every distribution head and all three loss terms of the model
//! while keeping each backward rule a few lines.

use super::NnError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    /// Constant or parameter input; no parents.
    Leaf,
    /// `y = W x + b` with `W` row-major `(out_dim, in_dim)`.
    Affine {
        w: usize,
        b: usize,
        x: usize,
        out_dim: usize,
        in_dim: usize,
    },
    Softplus {
        x: usize,
    },
    Relu {
        x: usize,
    },
    Concat {
        parts: Vec<usize>,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Div {
        a: usize,
        b: usize,
    },
    Exp {
        x: usize,
    },
    /// `y = c * x` for a scalar constant `c`.
    Scale {
        x: usize,
        c: f64,
    },
    /// `y = x + c` elementwise for a scalar constant.
    AddScalar {
        x: usize,
    },
    /// `y = x ⊙ c` for a constant vector `c`.
    MulConst {
        x: usize,
        c: Vec<f64>,
    },
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
    /// Scalar `Σ_i x_i`.
    Sum {
        x: usize,
    },
    /// Scalar `Σ_i m_i x_i` for a constant mask `m`.
    MaskedSum {
        x: usize,
        mask: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Records primitive ops with saved activations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the values of `v`.
    pub fn wrt(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current value of a node.
    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Registers a constant or parameter vector.
    pub fn leaf(&mut self, values: Vec<f64>) -> Var {
        self.push(Op::Leaf, values)
    }

    /// `W x + b` where `w` holds a row-major `(out_dim, in_dim)` matrix.
    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Var {
        let in_dim = self.nodes[x.0].value.len();
        let out_dim = self.nodes[b.0].value.len();
        assert_eq!(
            self.nodes[w.0].value.len(),
            out_dim * in_dim,
            "affine: weight len {} does not match {}x{}",
            self.nodes[w.0].value.len(),
            out_dim,
            in_dim
        );
        let mut out = vec![0.0; out_dim];
        {
            let wv = &self.nodes[w.0].value;
            let xv = &self.nodes[x.0].value;
            let bv = &self.nodes[b.0].value;
            for o in 0..out_dim {
                let row = o * in_dim;
                let mut acc = bv[o];
                for i in 0..in_dim {
                    acc += wv[row + i] * xv[i];
                }
                out[o] = acc;
            }
        }
        self.push(
            Op::Affine {
                w: w.0,
                b: b.0,
                x: x.0,
                out_dim,
                in_dim,
            },
            out,
        )
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| softplus(v)).collect();
        self.push(Op::Softplus { x: x.0 }, out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        self.push(Op::Relu { x: x.0 }, out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            out,
        )
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        assert_eq!(av.len(), bv.len(), "elementwise op on mismatched lengths");
        av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x + y);
        self.push(Op::Add { a: a.0, b: b.0 }, out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x - y);
        self.push(Op::Sub { a: a.0, b: b.0 }, out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x * y);
        self.push(Op::Mul { a: a.0, b: b.0 }, out)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary(a, b, |x, y| x / y);
        self.push(Op::Div { a: a.0, b: b.0 }, out)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|v| v.exp()).collect();
        self.push(Op::Exp { x: x.0 }, out)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|v| v * c).collect();
        self.push(Op::Scale { x: x.0, c }, out)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|v| v + c).collect();
        self.push(Op::AddScalar { x: x.0 }, out)
    }

    pub fn mul_const(&mut self, x: Var, c: &[f64]) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), c.len(), "mul_const on mismatched lengths");
        let out: Vec<f64> = xv.iter().zip(c.iter()).map(|(&a, &b)| a * b).collect();
        self.push(
            Op::MulConst {
                x: x.0,
                c: c.to_vec(),
            },
            out,
        )
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out: Vec<f64> = self.nodes[x.0]
            .value
            .iter()
            .map(|v| v.clamp(lo, hi))
            .collect();
        self.push(Op::Clamp { x: x.0, lo, hi }, out)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = 0.0;
        for &v in &self.nodes[x.0].value {
            acc += v;
        }
        self.push(Op::Sum { x: x.0 }, vec![acc])
    }

    pub fn masked_sum(&mut self, x: Var, mask: &[f64]) -> Var {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), mask.len(), "masked_sum on mismatched lengths");
        let mut acc = 0.0;
        for (v, m) in xv.iter().zip(mask.iter()) {
            acc += m * v;
        }
        self.push(
            Op::MaskedSum {
                x: x.0,
                mask: mask.to_vec(),
            },
            vec![acc],
        )
    }

    /// Accumulates `∂loss/∂node` for every node by replaying the tape backward.
    ///
    /// `loss` must be a finite scalar; a non-finite loss is rejected before
    /// any backward work happens.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let lv = &self.nodes[loss.0].value;
        assert_eq!(lv.len(), 1, "backward target must be scalar");
        if !lv[0].is_finite() {
            return Err(NnError::NonFiniteLoss { value: lv[0] });
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for id in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[id]);
            if g.iter().all(|&v| v == 0.0) {
                grads[id] = g;
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Affine {
                    w,
                    b,
                    x,
                    out_dim,
                    in_dim,
                } => {
                    let xv = self.nodes[*x].value.clone();
                    let wv = &self.nodes[*w].value;
                    let mut gx = vec![0.0; *in_dim];
                    {
                        let gw = &mut grads[*w];
                        for o in 0..*out_dim {
                            let go = g[o];
                            let row = o * in_dim;
                            for i in 0..*in_dim {
                                gw[row + i] += go * xv[i];
                                gx[i] += wv[row + i] * go;
                            }
                        }
                    }
                    for o in 0..*out_dim {
                        grads[*b][o] += g[o];
                    }
                    for i in 0..*in_dim {
                        grads[*x][i] += gx[i];
                    }
                }
                Op::Softplus { x } => {
                    let xv = &self.nodes[*x].value;
                    for (i, &go) in g.iter().enumerate() {
                        grads[*x][i] += go * sigmoid(xv[i]);
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[*x].value;
                    for (i, &go) in g.iter().enumerate() {
                        if xv[i] > 0.0 {
                            grads[*x][i] += go;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[*p].value.len();
                        for i in 0..len {
                            grads[*p][i] += g[offset + i];
                        }
                        offset += len;
                    }
                }
                Op::Add { a, b } => {
                    for (i, &go) in g.iter().enumerate() {
                        grads[*a][i] += go;
                    }
                    for (i, &go) in g.iter().enumerate() {
                        grads[*b][i] += go;
                    }
                }
                Op::Sub { a, b } => {
                    for (i, &go) in g.iter().enumerate() {
                        grads[*a][i] += go;
                    }
                    for (i, &go) in g.iter().enumerate() {
                        grads[*b][i] -= go;
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    for (i, &go) in g.iter().enumerate() {
                        grads[*a][i] += go * bv[i];
                    }
                    for (i, &go) in g.iter().enumerate() {
                        grads[*b][i] += go * av[i];
                    }
                }
                Op::Div { a, b } => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    for (i, &go) in g.iter().enumerate() {
                        grads[*a][i] += go / bv[i];
                    }
                    for (i, &go) in g.iter().enumerate() {
                        grads[*b][i] -= go * av[i] / (bv[i] * bv[i]);
                    }
                }
                Op::Exp { x } => {
                    let yv = &self.nodes[id].value;
                    for (i, &go) in g.iter().enumerate() {
                        grads[*x][i] += go * yv[i];
                    }
                }
                Op::Scale { x, c } => {
                    for (i, &go) in g.iter().enumerate() {
                        grads[*x][i] += go * c;
                    }
                }
                Op::AddScalar { x } => {
                    for (i, &go) in g.iter().enumerate() {
                        grads[*x][i] += go;
                    }
                }
                Op::MulConst { x, c } => {
                    for (i, &go) in g.iter().enumerate() {
                        grads[*x][i] += go * c[i];
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.nodes[*x].value;
                    for (i, &go) in g.iter().enumerate() {
                        if xv[i] > *lo && xv[i] < *hi {
                            grads[*x][i] += go;
                        }
                    }
                }
                Op::Sum { x } => {
                    let go = g[0];
                    for gi in grads[*x].iter_mut() {
                        *gi += go;
                    }
                }
                Op::MaskedSum { x, mask } => {
                    let go = g[0];
                    for (gi, m) in grads[*x].iter_mut().zip(mask.iter()) {
                        *gi += go * m;
                    }
                }
            }
            grads[id] = g;
        }
        Ok(Gradients { grads })
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_scalar(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn affine_matches_by_hand() {
        let mut tape = Tape::new();
        let w = tape.leaf(vec![2.0]);
        let b = tape.leaf(vec![1.0]);
        let x = tape.leaf(vec![3.0]);
        let y = tape.affine(w, b, x);
        assert_eq!(tape.value(y), &[7.0]);
    }

    #[test]
    fn backward_through_square_loss() {
        // loss = (w*x - t)^2 with w=1, x=2, t=0  =>  dloss/dw = 2*(wx)*x = 8
        let mut tape = Tape::new();
        let w = tape.leaf(vec![1.0]);
        let b = tape.leaf(vec![0.0]);
        let x = tape.leaf(vec![2.0]);
        let y = tape.affine(w, b, x);
        let sq = tape.mul(y, y);
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w), &[8.0]);
        assert_eq!(g.wrt(b), &[4.0]);
    }

    #[test]
    fn untouched_nodes_get_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0]);
        let unused = tape.leaf(vec![5.0]);
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused), &[0.0]);
    }

    #[test]
    fn non_finite_loss_is_rejected_before_backward() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![f64::INFINITY]);
        let loss = tape.sum(a);
        match tape.backward(loss) {
            Err(NnError::NonFiniteLoss { .. }) => {}
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn mul_with_shared_parent_accumulates_both_paths() {
        // y = x*x  =>  dy/dx = 2x
        let mut tape = Tape::new();
        let x = tape.leaf(vec![3.0]);
        let y = tape.mul(x, x);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x), &[6.0]);
    }

    #[test]
    fn pointwise_ops_match_finite_differences() {
        let xs = [-2.0, -0.3, 0.0, 0.7, 3.0];
        for &x0 in &xs {
            let run = |v: f64, which: usize| -> f64 {
                let mut tape = Tape::new();
                let x = tape.leaf(vec![v]);
                let y = match which {
                    0 => tape.softplus(x),
                    1 => tape.exp(x),
                    2 => {
                        let s = tape.scale(x, 1.7);
                        tape.add_scalar(s, 0.3)
                    }
                    _ => {
                        let d = tape.leaf(vec![2.5]);
                        tape.div(x, d)
                    }
                };
                tape.sum(y);
                tape.scalar(Var(tape.len() - 1))
            };
            for which in 0..4 {
                let mut tape = Tape::new();
                let x = tape.leaf(vec![x0]);
                let y = match which {
                    0 => tape.softplus(x),
                    1 => tape.exp(x),
                    2 => {
                        let s = tape.scale(x, 1.7);
                        tape.add_scalar(s, 0.3)
                    }
                    _ => {
                        let d = tape.leaf(vec![2.5]);
                        tape.div(x, d)
                    }
                };
                let loss = tape.sum(y);
                let g = tape.backward(loss).unwrap();
                let fd = fd_scalar(|v| run(v, which), x0);
                assert!(
                    (g.wrt(x)[0] - fd).abs() < 1e-6,
                    "op {which} at {x0}: analytic {} vs fd {fd}",
                    g.wrt(x)[0]
                );
            }
        }
    }

    #[test]
    fn clamp_kills_gradient_outside_range() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![-15.0, 0.5, 15.0]);
        let y = tape.clamp(x, -10.0, 10.0);
        let loss = tape.sum(y);
        assert_eq!(tape.value(y), &[-10.0, 0.5, 10.0]);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn concat_routes_gradients_to_parts() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0]);
        let b = tape.leaf(vec![3.0]);
        let c = tape.concat(&[a, b]);
        let loss = tape.masked_sum(c, &[1.0, 0.0, 2.0]);
        assert_eq!(tape.scalar(loss), 7.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a), &[1.0, 0.0]);
        assert_eq!(g.wrt(b), &[2.0]);
    }
}
