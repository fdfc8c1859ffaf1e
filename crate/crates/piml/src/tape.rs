//! Reverse-mode tape over jet-valued nodes.
//!
//! Every tape node carries a jet (value plus input-derivative coefficients up
//! to the tape's truncation order), so a single forward pass yields the
//! network output together with all input derivatives a PDE residual needs.
//! The reverse sweep differentiates the jet-augmented forward pass with
//! respect to the parameter slots: adjoints are full coefficient vectors,
//! which makes losses built from input derivatives (and derivatives of the
//! residual itself) differentiable in the parameters without nesting tapes.
//!
//! Graphs are built once and re-evaluated many times with fresh parameter
//! values; a [`Workspace`] holds the per-evaluation buffers.

use crate::error::{Error, Result};
use crate::jet::{fact, JetSpace};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Tanh,
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Const { off: u32 },
    Param { slot: u32 },
    Input { slot: u32, axis: i8 },
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Scale(u32, f64),
    AddConst(u32, f64),
    Recip(u32),
    Unary(UnaryKind, u32),
    Powi(u32, i32),
    Deriv(u32, u8),
    Sum { start: u32, len: u32 },
}

/// A fixed computation graph: operation records plus constant/argument pools.
pub struct TapeGraph {
    space: JetSpace,
    nodes: Vec<Node>,
    consts: Vec<f64>,
    sum_args: Vec<u32>,
    /// Remaining valid truncation order per node (Deriv consumes one).
    valid_order: Vec<u8>,
    n_params: usize,
    n_inputs: usize,
}

/// Reusable evaluation buffers for one tape.
pub struct Workspace {
    values: Vec<f64>,
    adjoints: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl Workspace {
    pub fn new(tape: &TapeGraph) -> Self {
        let nc = tape.space.n_coeffs();
        let n = tape.nodes.len() * nc;
        Self {
            values: vec![0.0; n],
            adjoints: vec![0.0; n],
            s1: vec![0.0; nc],
            s2: vec![0.0; nc],
            s3: vec![0.0; nc],
        }
    }
}

impl TapeGraph {
    pub fn new(dim: usize, order: usize) -> Self {
        Self {
            space: JetSpace::new(dim, order),
            nodes: Vec::new(),
            consts: Vec::new(),
            sum_args: Vec::new(),
            valid_order: Vec::new(),
            n_params: 0,
            n_inputs: 0,
        }
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn push(&mut self, node: Node, order: u8) -> NodeId {
        self.nodes.push(node);
        self.valid_order.push(order);
        (self.nodes.len() - 1) as NodeId
    }

    fn order_of(&self, id: NodeId) -> u8 {
        self.valid_order[id as usize]
    }

    /// A plain scalar constant.
    pub fn constant(&mut self, v: f64) -> NodeId {
        let mut jet = vec![0.0; self.space.n_coeffs()];
        jet[0] = v;
        self.const_jet(&jet)
    }

    /// A constant with explicit jet coefficients.
    pub fn const_jet(&mut self, coeffs: &[f64]) -> NodeId {
        assert_eq!(coeffs.len(), self.space.n_coeffs());
        let off = self.consts.len() as u32;
        self.consts.extend_from_slice(coeffs);
        let order = self.space.order() as u8;
        self.push(Node::Const { off }, order)
    }

    /// A collocation point baked into the graph: one constant jet per
    /// coordinate, seeded with a unit first-order coefficient on its axis so
    /// downstream jets carry derivatives with respect to that coordinate.
    pub fn seeded_point(&mut self, x: &[f64]) -> Vec<NodeId> {
        assert_eq!(x.len(), self.space.dim());
        let nc = self.space.n_coeffs();
        (0..x.len())
            .map(|axis| {
                let mut jet = vec![0.0; nc];
                jet[0] = x[axis];
                if self.space.order() >= 1 {
                    jet[self.space.unit_slot(axis)] = 1.0;
                }
                self.const_jet(&jet)
            })
            .collect()
    }

    /// A parameter leaf bound to an explicit slot. Multiple leaves may share
    /// a slot; their adjoints accumulate into one gradient entry.
    pub fn param(&mut self, slot: usize) -> NodeId {
        self.n_params = self.n_params.max(slot + 1);
        let order = self.space.order() as u8;
        self.push(Node::Param { slot: slot as u32 }, order)
    }

    /// A runtime input scalar; `axis` seeds a unit derivative direction.
    pub fn input(&mut self, axis: Option<usize>) -> NodeId {
        let slot = self.n_inputs as u32;
        self.n_inputs += 1;
        let order = self.space.order() as u8;
        self.push(
            Node::Input {
                slot,
                axis: axis.map_or(-1, |a| a as i8),
            },
            order,
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let o = self.order_of(a).min(self.order_of(b));
        self.push(Node::Add(a, b), o)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let o = self.order_of(a).min(self.order_of(b));
        self.push(Node::Sub(a, b), o)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let o = self.order_of(a).min(self.order_of(b));
        self.push(Node::Mul(a, b), o)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let r = self.recip(b);
        self.mul(a, r)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::Recip(a), o)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::Neg(a), o)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::Scale(a, k), o)
    }

    pub fn add_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::AddConst(a, k), o)
    }

    pub fn unary(&mut self, kind: UnaryKind, a: NodeId) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::Unary(kind, a), o)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Sin, a)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Cos, a)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        let o = self.order_of(a);
        self.push(Node::Powi(a, n), o)
    }

    pub fn sq(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// Input-derivative operator along `axis`; consumes one order of
    /// truncation validity.
    pub fn deriv(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let o = self.order_of(a);
        if o == 0 {
            return Err(Error::OrderOverflow {
                order: self.space.order() + 1,
                max: self.space.order(),
            });
        }
        Ok(self.push(Node::Deriv(a, axis as u8), o - 1))
    }

    pub fn sum(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty());
        let start = self.sum_args.len() as u32;
        self.sum_args.extend_from_slice(items);
        let o = items.iter().map(|&i| self.order_of(i)).min().unwrap();
        self.push(
            Node::Sum {
                start,
                len: items.len() as u32,
            },
            o,
        )
    }

    pub fn mean(&mut self, items: &[NodeId]) -> NodeId {
        let s = self.sum(items);
        self.scale(s, 1.0 / items.len() as f64)
    }

    /// Evaluate all nodes. `params` and `inputs` must match the registered
    /// slot counts; any non-finite coefficient aborts with the node index.
    pub fn forward(&self, params: &[f64], inputs: &[f64], ws: &mut Workspace) -> Result<()> {
        assert_eq!(params.len(), self.n_params, "param slot count");
        assert_eq!(inputs.len(), self.n_inputs, "input slot count");
        let nc = self.space.n_coeffs();
        let order = self.space.order();
        let mut derivs = [0.0; 5];
        for (i, node) in self.nodes.iter().enumerate() {
            let (prev, rest) = ws.values.split_at_mut(i * nc);
            let out = &mut rest[..nc];
            match *node {
                Node::Const { off } => {
                    out.copy_from_slice(&self.consts[off as usize..off as usize + nc]);
                }
                Node::Param { slot } => {
                    out.fill(0.0);
                    out[0] = params[slot as usize];
                }
                Node::Input { slot, axis } => {
                    out.fill(0.0);
                    out[0] = inputs[slot as usize];
                    if axis >= 0 && order >= 1 {
                        out[self.space.unit_slot(axis as usize)] = 1.0;
                    }
                }
                Node::Add(a, b) => {
                    let (va, vb) = (jet(prev, a, nc), jet(prev, b, nc));
                    for k in 0..nc {
                        out[k] = va[k] + vb[k];
                    }
                }
                Node::Sub(a, b) => {
                    let (va, vb) = (jet(prev, a, nc), jet(prev, b, nc));
                    for k in 0..nc {
                        out[k] = va[k] - vb[k];
                    }
                }
                Node::Mul(a, b) => {
                    self.space.mul(jet(prev, a, nc), jet(prev, b, nc), out);
                }
                Node::Neg(a) => {
                    let va = jet(prev, a, nc);
                    for k in 0..nc {
                        out[k] = -va[k];
                    }
                }
                Node::Scale(a, c) => {
                    let va = jet(prev, a, nc);
                    for k in 0..nc {
                        out[k] = c * va[k];
                    }
                }
                Node::AddConst(a, c) => {
                    let va = jet(prev, a, nc);
                    out.copy_from_slice(va);
                    out[0] += c;
                }
                Node::Recip(a) => {
                    let va = jet(prev, a, nc);
                    recip_derivs(va[0], order, &mut derivs);
                    self.space.compose(va, &derivs[..=order], out, &mut ws.s1, &mut ws.s2);
                }
                Node::Unary(kind, a) => {
                    let va = jet(prev, a, nc);
                    unary_derivs(kind, va[0], order, &mut derivs);
                    self.space.compose(va, &derivs[..=order], out, &mut ws.s1, &mut ws.s2);
                }
                Node::Powi(a, n) => {
                    let va = jet(prev, a, nc);
                    powi_derivs(va[0], n, order, &mut derivs);
                    self.space.compose(va, &derivs[..=order], out, &mut ws.s1, &mut ws.s2);
                }
                Node::Deriv(a, axis) => {
                    self.space.deriv_jet(jet(prev, a, nc), axis as usize, out);
                }
                Node::Sum { start, len } => {
                    out.fill(0.0);
                    for &arg in &self.sum_args[start as usize..(start + len) as usize] {
                        let va = jet(prev, arg, nc);
                        for k in 0..nc {
                            out[k] += va[k];
                        }
                    }
                }
            }
        }
        if let Some(pos) = ws.values[..self.nodes.len() * nc]
            .iter()
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { node: pos / nc });
        }
        Ok(())
    }

    /// Scalar value (zeroth coefficient) of a node after [`Self::forward`].
    pub fn value(&self, ws: &Workspace, id: NodeId) -> f64 {
        ws.values[id as usize * self.space.n_coeffs()]
    }

    /// Partial derivative ∂^α of a node's value with respect to the seeded
    /// input directions.
    pub fn derivative(&self, ws: &Workspace, id: NodeId, index: &[u8]) -> Result<f64> {
        let total: usize = index.iter().map(|&v| v as usize).sum();
        if total > self.space.order() {
            return Err(Error::OrderOverflow {
                order: total,
                max: self.space.order(),
            });
        }
        let slot = self.space.slot(index).ok_or(Error::OrderOverflow {
            order: total,
            max: self.space.order(),
        })?;
        Ok(ws.values[id as usize * self.space.n_coeffs() + slot] * self.space.factorial(slot))
    }

    /// Reverse sweep from the scalar part of `loss`, accumulating parameter
    /// gradients into `grads` (zeroed here, one entry per parameter slot).
    pub fn backward(&self, ws: &mut Workspace, loss: NodeId, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.n_params);
        grads.fill(0.0);
        let nc = self.space.n_coeffs();
        let order = self.space.order();
        let upto = loss as usize + 1;
        ws.adjoints[..upto * nc].fill(0.0);
        ws.adjoints[loss as usize * nc] = 1.0;
        let mut derivs = [0.0; 5];
        for i in (0..upto).rev() {
            let (below, rest) = ws.adjoints.split_at_mut(i * nc);
            let cbar = &rest[..nc];
            if cbar.iter().all(|&v| v == 0.0) {
                continue;
            }
            match self.nodes[i] {
                Node::Const { .. } | Node::Input { .. } => {}
                Node::Param { slot } => {
                    grads[slot as usize] += cbar[0];
                }
                Node::Add(a, b) => {
                    axpy(jet_mut(below, a, nc), cbar, 1.0);
                    axpy(jet_mut(below, b, nc), cbar, 1.0);
                }
                Node::Sub(a, b) => {
                    axpy(jet_mut(below, a, nc), cbar, 1.0);
                    axpy(jet_mut(below, b, nc), cbar, -1.0);
                }
                Node::Mul(a, b) => {
                    let va = jet(&ws.values, a, nc);
                    let vb = jet(&ws.values, b, nc);
                    if a == b {
                        ws.s1.copy_from_slice(va);
                        for v in ws.s1.iter_mut() {
                            *v *= 2.0;
                        }
                        self.space.corr(cbar, &ws.s1, jet_mut(below, a, nc));
                    } else {
                        // Adjoints of both factors in one pass over the pair table.
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        let (bl, bh) = below.split_at_mut(hi as usize * nc);
                        let abar_hi = &mut bh[..nc];
                        let abar_lo = &mut bl[lo as usize * nc..lo as usize * nc + nc];
                        if a < b {
                            self.space.mul_backward(cbar, va, vb, abar_lo, abar_hi);
                        } else {
                            self.space.mul_backward(cbar, va, vb, abar_hi, abar_lo);
                        }
                    }
                }
                Node::Neg(a) => axpy(jet_mut(below, a, nc), cbar, -1.0),
                Node::Scale(a, c) => axpy(jet_mut(below, a, nc), cbar, c),
                Node::AddConst(a, _) => axpy(jet_mut(below, a, nc), cbar, 1.0),
                Node::Recip(a) => {
                    // d(1/b) = -(1/b)^2 db
                    let vc = jet(&ws.values, i as u32, nc);
                    self.space.mul(vc, vc, &mut ws.s1);
                    for v in ws.s1.iter_mut() {
                        *v = -*v;
                    }
                    self.space.corr(cbar, &ws.s1, jet_mut(below, a, nc));
                }
                Node::Unary(kind, a) => {
                    let va = jet(&ws.values, a, nc);
                    unary_derivs(kind, va[0], order + 1, &mut derivs);
                    self.space
                        .compose(va, &derivs[1..=order + 1], &mut ws.s1, &mut ws.s2, &mut ws.s3);
                    self.space.corr(cbar, &ws.s1, jet_mut(below, a, nc));
                }
                Node::Powi(a, n) => {
                    let va = jet(&ws.values, a, nc);
                    powi_derivs(va[0], n, order + 1, &mut derivs);
                    self.space
                        .compose(va, &derivs[1..=order + 1], &mut ws.s1, &mut ws.s2, &mut ws.s3);
                    self.space.corr(cbar, &ws.s1, jet_mut(below, a, nc));
                }
                Node::Deriv(a, axis) => {
                    self.space.deriv_backward(cbar, axis as usize, jet_mut(below, a, nc));
                }
                Node::Sum { start, len } => {
                    for &arg in &self.sum_args[start as usize..(start + len) as usize] {
                        axpy(jet_mut(below, arg, nc), cbar, 1.0);
                    }
                }
            }
        }
    }

    /// One-shot evaluation of selected output nodes with a fresh workspace.
    pub fn eval_outputs(&self, params: &[f64], inputs: &[f64], outputs: &[NodeId]) -> Result<Vec<f64>> {
        let mut ws = Workspace::new(self);
        self.forward(params, inputs, &mut ws)?;
        Ok(outputs.iter().map(|&o| self.value(&ws, o)).collect())
    }
}

fn jet<'a>(buf: &'a [f64], id: u32, nc: usize) -> &'a [f64] {
    &buf[id as usize * nc..id as usize * nc + nc]
}

fn jet_mut<'a>(buf: &'a mut [f64], id: u32, nc: usize) -> &'a mut [f64] {
    &mut buf[id as usize * nc..id as usize * nc + nc]
}

fn axpy(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// φ^(0..=k_max) for the supported primitives. `k_max` ≤ 4.
fn unary_derivs(kind: UnaryKind, v: f64, k_max: usize, out: &mut [f64; 5]) {
    match kind {
        UnaryKind::Tanh => {
            let t = v.tanh();
            let s = 1.0 - t * t; // sech^2
            out[0] = t;
            out[1] = s;
            out[2] = -2.0 * t * s;
            out[3] = s * (6.0 * t * t - 2.0);
            out[4] = s * (16.0 * t - 24.0 * t * t * t);
        }
        UnaryKind::Sin => {
            let (s, c) = v.sin_cos();
            out[0] = s;
            out[1] = c;
            out[2] = -s;
            out[3] = -c;
            out[4] = s;
        }
        UnaryKind::Cos => {
            let (s, c) = v.sin_cos();
            out[0] = c;
            out[1] = -s;
            out[2] = -c;
            out[3] = s;
            out[4] = c;
        }
        UnaryKind::Exp => {
            let e = v.exp();
            out[..=k_max].fill(e);
        }
    }
}

fn recip_derivs(v: f64, k_max: usize, out: &mut [f64; 5]) {
    let inv = 1.0 / v;
    let mut cur = inv;
    for k in 0..=k_max {
        out[k] = cur * fact(k) * if k % 2 == 0 { 1.0 } else { -1.0 };
        cur *= inv;
    }
}

fn powi_derivs(v: f64, n: i32, k_max: usize, out: &mut [f64; 5]) {
    let mut coef = 1.0;
    for k in 0..=k_max {
        let e = n - k as i32;
        out[k] = if coef == 0.0 { 0.0 } else { coef * v.powi(e) };
        coef *= (n - k as i32) as f64;
    }
}

/// Central finite-difference estimate of ∂^index f at x with step h,
/// compared against `ad_value`: returns |AD − FD| / max(1, |AD|).
pub fn fd_check(f: &dyn Fn(&[f64]) -> f64, x: &[f64], index: &[u8], h: f64, ad_value: f64) -> f64 {
    assert!(h > 0.0);
    let fd = central_fd(f, &mut x.to_vec(), &mut index.to_vec(), h);
    (ad_value - fd).abs() / ad_value.abs().max(1.0)
}

fn central_fd(f: &dyn Fn(&[f64]) -> f64, x: &mut Vec<f64>, index: &mut Vec<u8>, h: f64) -> f64 {
    match index.iter().position(|&v| v > 0) {
        None => f(x),
        Some(axis) => {
            index[axis] -= 1;
            let x0 = x[axis];
            x[axis] = x0 + h;
            let hi = central_fd(f, x, index, h);
            x[axis] = x0 - h;
            let lo = central_fd(f, x, index, h);
            x[axis] = x0;
            index[axis] += 1;
            (hi - lo) / (2.0 * h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn forward_identity_and_product() {
        let mut t = TapeGraph::new(0, 0);
        let x = t.input(None);
        let y = t.input(None);
        let p = t.mul(x, y);
        assert_eq!(t.eval_outputs(&[], &[2.0, 3.0], &[x, y, p]).unwrap(), vec![2.0, 3.0, 6.0]);
    }

    #[test]
    fn tanh_at_origin() {
        let mut t = TapeGraph::new(0, 0);
        let x = t.input(None);
        let y = t.tanh(x);
        assert_eq!(t.eval_outputs(&[], &[0.0], &[y]).unwrap(), vec![0.0]);
    }

    #[test]
    fn non_finite_intermediate_detected() {
        let mut t = TapeGraph::new(0, 0);
        let x = t.input(None);
        let r = t.recip(x);
        let mut ws = Workspace::new(&t);
        let err = t.forward(&[], &[0.0], &mut ws).unwrap_err();
        match err {
            Error::NonFinite { node } => assert_eq!(node, r as usize),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn grad_of_square() {
        // loss = p^2 at p = 3 -> dloss/dp = 6
        let mut t = TapeGraph::new(0, 0);
        let p = t.param(0);
        let loss = t.sq(p);
        let mut ws = Workspace::new(&t);
        t.forward(&[3.0], &[], &mut ws).unwrap();
        assert_eq!(t.value(&ws, loss), 9.0);
        let mut g = vec![0.0];
        t.backward(&mut ws, loss, &mut g);
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn grad_of_constant_and_linear_sum() {
        let mut t = TapeGraph::new(0, 0);
        let ps: Vec<_> = (0..3).map(|i| t.param(i)).collect();
        let c = t.constant(5.0);
        let s = t.sum(&ps);
        let mut ws = Workspace::new(&t);
        t.forward(&[1.0, 1.0, 1.0], &[], &mut ws).unwrap();
        let mut g = vec![0.0; 3];
        t.backward(&mut ws, c, &mut g);
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
        t.backward(&mut ws, s, &mut g);
        assert_eq!(g, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn input_derivatives_of_composites() {
        // u = tanh(2x): u'(0) = 2, u'''(0) = 2^3 * tanh'''(0) = -16
        let mut t = TapeGraph::new(1, 3);
        let x = t.seeded_point(&[0.0])[0];
        let wx = t.scale(x, 2.0);
        let u = t.tanh(wx);
        let mut ws = Workspace::new(&t);
        t.forward(&[], &[], &mut ws).unwrap();
        assert_relative_eq!(t.derivative(&ws, u, &[1]).unwrap(), 2.0);
        assert_relative_eq!(t.derivative(&ws, u, &[3]).unwrap(), -16.0, max_relative = 1e-13);
    }

    #[test]
    fn third_derivative_of_sin() {
        // d^3 sin / dx^3 at 0 = -cos(0) = -1
        let mut t = TapeGraph::new(1, 3);
        let x = t.seeded_point(&[0.0])[0];
        let u = t.sin(x);
        let mut ws = Workspace::new(&t);
        t.forward(&[], &[], &mut ws).unwrap();
        assert_relative_eq!(t.derivative(&ws, u, &[3]).unwrap(), -1.0, max_relative = 1e-13);
    }

    #[test]
    fn deriv_node_exposes_residual_derivative() {
        // f(x) = x^3 as a jet; Deriv gives 3x^2 with its own x-derivative 6x.
        let mut t = TapeGraph::new(1, 3);
        let x = t.seeded_point(&[2.0])[0];
        let f = t.powi(x, 3);
        let df = t.deriv(f, 0).unwrap();
        let ddf = t.deriv(df, 0).unwrap();
        let mut ws = Workspace::new(&t);
        t.forward(&[], &[], &mut ws).unwrap();
        assert_relative_eq!(t.value(&ws, df), 12.0);
        assert_relative_eq!(t.derivative(&ws, df, &[1]).unwrap(), 12.0);
        assert_relative_eq!(t.value(&ws, ddf), 12.0);
        // A third Deriv exhausts the truncation order.
        let dddf = t.deriv(ddf, 0).unwrap();
        assert!(t.deriv(dddf, 0).is_err());
    }

    #[test]
    fn backward_through_deriv_and_mul() {
        // loss = (d/dx [p * x^2])^2 at x=1, p=3: d/dx = 2px = 6, loss = 36,
        // dloss/dp = 2 * 6 * 2x = 24.
        let mut t = TapeGraph::new(1, 2);
        let p = t.param(0);
        let x = t.seeded_point(&[1.0])[0];
        let x2 = t.sq(x);
        let u = t.mul(p, x2);
        let du = t.deriv(u, 0).unwrap();
        let loss = t.sq(du);
        let mut ws = Workspace::new(&t);
        t.forward(&[3.0], &[], &mut ws).unwrap();
        assert_relative_eq!(t.value(&ws, loss), 36.0);
        let mut g = vec![0.0];
        t.backward(&mut ws, loss, &mut g);
        assert_relative_eq!(g[0], 24.0);
    }

    #[test]
    fn fd_check_cases() {
        // quadratic: FD of x^2 is exact up to roundoff
        let f = |x: &[f64]| x[0] * x[0];
        assert!(fd_check(&f, &[3.0], &[1], 1e-4, 6.0) <= 1e-7);
        // exp second derivative with h=1e-3
        let g = |x: &[f64]| x[0].exp();
        assert!(fd_check(&g, &[0.0], &[2], 1e-3, 1.0) <= 1e-5);
        // constant
        let c = |_: &[f64]| 4.0;
        assert_eq!(fd_check(&c, &[0.3], &[1], 1e-4, 0.0), 0.0);
    }

    #[test]
    fn reverse_matches_forward_directional_derivative() {
        // Random-ish smooth scalar of 3 params; dot(grad, v) vs jet tangent.
        let build = |t: &mut TapeGraph| {
            let p0 = t.param(0);
            let p1 = t.param(1);
            let p2 = t.param(2);
            let a = t.sin(p0);
            let b = t.mul(a, p1);
            let c = t.exp(p2);
            let d = t.add(b, c);
            let e = t.mul(d, d);
            t.tanh(e)
        };
        let mut t = TapeGraph::new(0, 0);
        let loss = build(&mut t);
        let p = [0.4, -0.7, 0.2];
        let mut ws = Workspace::new(&t);
        t.forward(&p, &[], &mut ws).unwrap();
        let mut g = vec![0.0; 3];
        t.backward(&mut ws, loss, &mut g);
        let v = [0.3, 0.9, -1.1];
        let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        // Forward directional derivative via a 1d jet along v.
        let mut tf = TapeGraph::new(1, 1);
        let vp: Vec<_> = (0..3)
            .map(|i| {
                let jet = [p[i], v[i]];
                tf.const_jet(&jet)
            })
            .collect();
        let a = tf.sin(vp[0]);
        let b = tf.mul(a, vp[1]);
        let c = tf.exp(vp[2]);
        let d = tf.add(b, c);
        let e = tf.mul(d, d);
        let lf = tf.tanh(e);
        let mut wsf = Workspace::new(&tf);
        tf.forward(&[], &[], &mut wsf).unwrap();
        let dir = tf.derivative(&wsf, lf, &[1]).unwrap();
        assert_relative_eq!(dot, dir, max_relative = 1e-10);
    }
}
