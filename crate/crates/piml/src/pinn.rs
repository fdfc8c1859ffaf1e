//! Loss assembly and training: vanilla, self-adaptive (minimax), and
//! gradient-enhanced modes.
//!
//! A [`LossProgram`] compiles the full loss of a (problem, networks,
//! collocation) configuration into one tape, built once; every epoch is then
//! a forward/backward pass with fresh parameter values. Self-adaptive
//! weights live in parameter slots after the network parameters, so one
//! reverse sweep yields both the descent gradient (θ) and the ascent
//! gradient (λ).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::MAX_ORDER;
use crate::network::{adam_step, ascent_step, AdamState, Mlp};
use crate::problems::{
    sample_collocation, BoundaryKind, CollocationCounts, CollocationSet, ProblemSpec, Strategy,
};
use crate::tape::{NodeId, TapeGraph, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Sa,
    Gpinn,
}

/// Static loss-term weights. `w_g` has one entry per input axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_b: f64,
    pub w_i: f64,
    pub w_g: Vec<f64>,
}

impl LossWeights {
    pub fn ones(dim: usize) -> Self {
        Self { w_f: 1.0, w_b: 1.0, w_i: 1.0, w_g: vec![0.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_f, self.w_b, self.w_i].into_iter().chain(self.w_g.iter().copied());
        for (i, w) in all.enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config {
                    path: "weights".into(),
                    msg: format!("weight #{i} = {w} must be finite and >= 0"),
                });
            }
        }
        Ok(())
    }
}

/// Trainable self-adaptation weights, one per interior / boundary / initial
/// point, stored in collocation order (interior first, then boundary).
#[derive(Debug, Clone)]
pub struct SAWeights {
    values: Vec<f64>,
    n_r: usize,
    boundary_kinds: Vec<BoundaryKind>,
}

impl SAWeights {
    /// All-ones initialization matching a collocation set.
    pub fn ones(spec: &ProblemSpec, colloc: &CollocationSet) -> Self {
        let boundary_kinds = colloc
            .boundary
            .iter()
            .map(|(op, _)| spec.boundary_ops[*op].kind)
            .collect::<Vec<_>>();
        Self {
            values: vec![1.0; colloc.interior.len() + boundary_kinds.len()],
            n_r: colloc.interior.len(),
            boundary_kinds,
        }
    }

    pub fn from_values(spec: &ProblemSpec, colloc: &CollocationSet, values: Vec<f64>) -> Result<Self> {
        let mut sa = Self::ones(spec, colloc);
        if values.len() != sa.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} self-adaptive weights for {} points",
                values.len(),
                sa.values.len()
            )));
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config {
                path: "sa_weights".into(),
                msg: "all self-adaptive weights must be positive".into(),
            });
        }
        sa.values = values;
        Ok(sa)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// λ for residual (interior) points.
    pub fn lambda_r(&self) -> &[f64] {
        &self.values[..self.n_r]
    }

    /// λ for spatial boundary points.
    pub fn lambda_b(&self) -> Vec<f64> {
        self.family(BoundaryKind::Spatial)
    }

    /// λ for initial-condition points.
    pub fn lambda_0(&self) -> Vec<f64> {
        self.family(BoundaryKind::Initial)
    }

    fn family(&self, kind: BoundaryKind) -> Vec<f64> {
        self.boundary_kinds
            .iter()
            .zip(&self.values[self.n_r..])
            .filter(|(k, _)| **k == kind)
            .map(|(_, v)| *v)
            .collect()
    }
}

/// Loss component values from one evaluation.
#[derive(Debug, Clone)]
pub struct LossValues {
    pub total: f64,
    pub loss_f: f64,
    pub loss_b: f64,
    pub loss_i: f64,
    /// Unweighted gradient-enhancement terms, one per axis.
    pub loss_g: Vec<f64>,
}

impl LossValues {
    pub fn loss_g_total(&self) -> f64 {
        self.loss_g.iter().sum()
    }
}

/// A compiled loss tape. Parameter layout: network parameters (all fields
/// concatenated) in slots `0..n_theta`, self-adaptive weights after.
pub struct LossProgram {
    tape: TapeGraph,
    loss: NodeId,
    comp_f: Option<NodeId>,
    comp_b: Option<NodeId>,
    comp_i: Option<NodeId>,
    comp_g: Vec<(usize, NodeId)>,
    n_theta: usize,
    n_lambda: usize,
    dim: usize,
}

pub(crate) fn theta_bases(nets: &[Mlp]) -> (Vec<usize>, usize) {
    let mut bases = Vec::with_capacity(nets.len());
    let mut total = 0;
    for net in nets {
        bases.push(total);
        total += net.n_params();
    }
    (bases, total)
}

pub(crate) fn emit_fields(
    tape: &mut TapeGraph,
    nets: &[Mlp],
    bases: &[usize],
    p: &[f64],
) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
    let inputs = tape.seeded_point(p);
    let mut fields = Vec::with_capacity(nets.len());
    for (net, base) in nets.iter().zip(bases) {
        fields.push(net.emit(tape, *base, &inputs)?[0]);
    }
    Ok((inputs, fields))
}

/// A loss tape with all weighted terms emitted but not yet summed; the
/// domain-decomposition trainer appends interface terms before finishing.
pub(crate) struct ProgramCore {
    pub(crate) tape: TapeGraph,
    pub(crate) bases: Vec<usize>,
    comp_f: Option<NodeId>,
    comp_b: Option<NodeId>,
    comp_i: Option<NodeId>,
    comp_g: Vec<(usize, NodeId)>,
    weighted_terms: Vec<NodeId>,
    n_theta: usize,
    n_lambda: usize,
    dim: usize,
}

impl ProgramCore {
    /// Sum the weighted terms (plus any extras appended by the caller) into
    /// the final loss node. With no extras the tape is exactly what
    /// [`build_loss_program`] emits, so results agree bit-for-bit.
    pub(crate) fn finish(mut self, extra_weighted: Vec<NodeId>) -> LossProgram {
        self.weighted_terms.extend(extra_weighted);
        let loss = if self.weighted_terms.is_empty() {
            self.tape.constant(0.0)
        } else {
            self.tape.sum(&self.weighted_terms)
        };
        LossProgram {
            tape: self.tape,
            loss,
            comp_f: self.comp_f,
            comp_b: self.comp_b,
            comp_i: self.comp_i,
            comp_g: self.comp_g,
            n_theta: self.n_theta,
            n_lambda: self.n_lambda,
            dim: self.dim,
        }
    }
}

/// Compile the loss for the given mode. With `Mode::Gpinn` and all `w_g`
/// zero the emitted tape is identical to the vanilla one, so the values are
/// bit-identical by construction.
pub fn build_loss_program(
    spec: &ProblemSpec,
    nets: &[Mlp],
    colloc: &CollocationSet,
    weights: &LossWeights,
    mode: Mode,
) -> Result<LossProgram> {
    Ok(assemble_core(spec, nets, colloc, weights, mode)?.finish(Vec::new()))
}

pub(crate) fn assemble_core(
    spec: &ProblemSpec,
    nets: &[Mlp],
    colloc: &CollocationSet,
    weights: &LossWeights,
    mode: Mode,
) -> Result<ProgramCore> {
    weights.validate()?;
    if nets.len() != spec.n_fields {
        return Err(Error::ShapeMismatch(format!(
            "{} networks for {} fields",
            nets.len(),
            spec.n_fields
        )));
    }
    for net in nets {
        if net.input_dim() != spec.spatial_dim() || net.output_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "field network must map {}->1, got {}->{}",
                spec.spatial_dim(),
                net.input_dim(),
                net.output_dim()
            )));
        }
    }
    let dim = spec.spatial_dim();
    let want_grad_terms = mode == Mode::Gpinn && weights.w_g.iter().any(|w| *w > 0.0);
    let order = if want_grad_terms {
        if spec.max_deriv_order + 1 > MAX_ORDER {
            return Err(Error::OrderOverflow { order: spec.max_deriv_order + 1, max: MAX_ORDER });
        }
        spec.max_deriv_order + 1
    } else {
        spec.max_deriv_order
    };

    if colloc.interior.is_empty() && weights.w_f > 0.0 {
        return Err(Error::EmptySet("interior collocation points".into()));
    }
    if colloc.boundary.is_empty() && weights.w_b > 0.0 && !spec.boundary_ops.is_empty() {
        return Err(Error::EmptySet("boundary collocation points".into()));
    }
    let wants_data = spec.data_sites.iter().any(|s| *s != crate::problems::DataSite::None);
    if colloc.data.is_empty() && weights.w_i > 0.0 && wants_data {
        return Err(Error::EmptySet("data points".into()));
    }

    let mut tape = TapeGraph::new(dim, order);
    let (bases, n_theta) = theta_bases(nets);
    let mut n_lambda = 0;
    let mut next_lambda = || {
        let slot = n_theta + n_lambda;
        n_lambda += 1;
        slot
    };

    let mut comp_f = None;
    if !colloc.interior.is_empty() {
        let mut terms = Vec::with_capacity(colloc.interior.len());
        for p in &colloc.interior {
            let (inputs, fields) = emit_fields(&mut tape, nets, &bases, p)?;
            let r = (spec.residual)(&mut tape, &fields, &inputs)?;
            let weighted = if mode == Mode::Sa {
                let lam = next_lambda();
                let l = tape.param(lam);
                tape.mul(l, r)
            } else {
                r
            };
            terms.push(tape.sq(weighted));
        }
        comp_f = Some(tape.mean(&terms));
    }

    let mut comp_b = None;
    if !colloc.boundary.is_empty() {
        let mut terms = Vec::with_capacity(colloc.boundary.len());
        for (op_idx, p) in &colloc.boundary {
            let op = &spec.boundary_ops[*op_idx];
            let (_, fields) = emit_fields(&mut tape, nets, &bases, p)?;
            let diff = tape.add_const(fields[op.field], -(op.target)(p));
            let weighted = if mode == Mode::Sa {
                let lam = next_lambda();
                let l = tape.param(lam);
                tape.mul(l, diff)
            } else {
                diff
            };
            terms.push(tape.sq(weighted));
        }
        comp_b = Some(tape.mean(&terms));
    }

    let mut comp_i = None;
    if !colloc.data.is_empty() {
        let mut terms = Vec::with_capacity(colloc.data.len());
        for (field, p, target) in &colloc.data {
            let (_, fields) = emit_fields(&mut tape, nets, &bases, p)?;
            let diff = tape.add_const(fields[*field], -target);
            terms.push(tape.sq(diff));
        }
        comp_i = Some(tape.mean(&terms));
    }

    let mut comp_g = Vec::new();
    if want_grad_terms {
        for (axis, &wg) in weights.w_g.iter().enumerate() {
            if wg == 0.0 {
                continue;
            }
            let pts = colloc.grad.get(axis).filter(|v| !v.is_empty()).ok_or_else(|| {
                Error::EmptySet(format!("gradient-loss points for axis {axis}"))
            })?;
            let mut terms = Vec::with_capacity(pts.len());
            for p in pts {
                let (inputs, fields) = emit_fields(&mut tape, nets, &bases, p)?;
                let r = (spec.residual)(&mut tape, &fields, &inputs)?;
                let dr = tape.deriv(r, axis)?;
                terms.push(tape.sq(dr));
            }
            comp_g.push((axis, tape.mean(&terms)));
        }
    }

    let mut weighted_terms = Vec::new();
    if let Some(f) = comp_f {
        weighted_terms.push(tape.scale(f, weights.w_f));
    }
    if let Some(b) = comp_b {
        weighted_terms.push(tape.scale(b, weights.w_b));
    }
    if let Some(i) = comp_i {
        weighted_terms.push(tape.scale(i, weights.w_i));
    }
    for &(axis, g) in &comp_g {
        weighted_terms.push(tape.scale(g, weights.w_g[axis]));
    }

    Ok(ProgramCore {
        tape,
        bases,
        comp_f,
        comp_b,
        comp_i,
        comp_g,
        weighted_terms,
        n_theta,
        n_lambda,
        dim,
    })
}

impl LossProgram {
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    pub fn n_params(&self) -> usize {
        self.n_theta + self.n_lambda
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.tape)
    }

    fn collect(&self, ws: &Workspace) -> LossValues {
        let get = |n: Option<NodeId>| n.map_or(0.0, |id| self.tape.value(ws, id));
        let mut loss_g = vec![0.0; self.dim];
        for &(axis, id) in &self.comp_g {
            loss_g[axis] = self.tape.value(ws, id);
        }
        LossValues {
            total: self.tape.value(ws, self.loss),
            loss_f: get(self.comp_f),
            loss_b: get(self.comp_b),
            loss_i: get(self.comp_i),
            loss_g,
        }
    }

    /// `params` = θ followed by λ (if any).
    pub fn eval(&self, params: &[f64], ws: &mut Workspace) -> Result<LossValues> {
        self.eval_with_inputs(params, &[], ws)
    }

    /// Evaluate and differentiate; `grads` covers all θ and λ slots.
    pub fn eval_grad(&self, params: &[f64], ws: &mut Workspace, grads: &mut [f64]) -> Result<LossValues> {
        self.eval_grad_with_inputs(params, &[], ws, grads)
    }

    /// Variant for programs with runtime input slots (interface snapshots).
    pub fn eval_with_inputs(&self, params: &[f64], inputs: &[f64], ws: &mut Workspace) -> Result<LossValues> {
        self.tape.forward(params, inputs, ws)?;
        Ok(self.collect(ws))
    }

    pub fn eval_grad_with_inputs(
        &self,
        params: &[f64],
        inputs: &[f64],
        ws: &mut Workspace,
        grads: &mut [f64],
    ) -> Result<LossValues> {
        self.tape.forward(params, inputs, ws)?;
        self.tape.backward(ws, self.loss, grads);
        Ok(self.collect(ws))
    }
}

/// PDE residual of the networks at one point (all derivatives exact).
pub fn pde_residual(nets: &[Mlp], spec: &ProblemSpec, point: &[f64]) -> Result<f64> {
    let mut tape = TapeGraph::new(spec.spatial_dim(), spec.max_deriv_order);
    let (bases, _) = theta_bases(nets);
    let (inputs, fields) = emit_fields(&mut tape, nets, &bases, point)?;
    let r = (spec.residual)(&mut tape, &fields, &inputs)?;
    let params: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
    Ok(tape.eval_outputs(&params, &[], &[r])?[0])
}

/// Mean squared residual over interior points.
pub fn loss_residual(nets: &[Mlp], spec: &ProblemSpec, pts: &[Vec<f64>]) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::EmptySet("residual points".into()));
    }
    let mut acc = 0.0;
    for p in pts {
        let r = pde_residual(nets, spec, p)?;
        acc += r * r;
    }
    Ok(acc / pts.len() as f64)
}

/// Mean squared boundary-operator mismatch.
pub fn loss_boundary(nets: &[Mlp], spec: &ProblemSpec, pts: &[(usize, Vec<f64>)]) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::EmptySet("boundary points".into()));
    }
    let mut acc = 0.0;
    for (op_idx, p) in pts {
        let op = &spec.boundary_ops[*op_idx];
        let u = nets[op.field].forward(p)?[0];
        let d = u - (op.target)(p);
        acc += d * d;
    }
    Ok(acc / pts.len() as f64)
}

/// Mean squared data mismatch.
pub fn loss_data(nets: &[Mlp], data: &[(usize, Vec<f64>, f64)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySet("data points".into()));
    }
    let mut acc = 0.0;
    for (field, p, target) in data {
        let d = nets[*field].forward(p)?[0] - target;
        acc += d * d;
    }
    Ok(acc / data.len() as f64)
}

fn eval_program(
    spec: &ProblemSpec,
    nets: &[Mlp],
    colloc: &CollocationSet,
    weights: &LossWeights,
    mode: Mode,
    lambda: &[f64],
) -> Result<LossValues> {
    let program = build_loss_program(spec, nets, colloc, weights, mode)?;
    if lambda.len() != program.n_lambda {
        return Err(Error::ShapeMismatch(format!(
            "{} self-adaptive weights, program expects {}",
            lambda.len(),
            program.n_lambda
        )));
    }
    let mut params: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
    params.extend_from_slice(lambda);
    let mut ws = program.workspace();
    program.eval(&params, &mut ws)
}

/// w_f·L_f + w_b·L_b + w_i·L_i.
pub fn total_loss(
    nets: &[Mlp],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(eval_program(spec, nets, colloc, weights, Mode::Vanilla, &[])?.total)
}

/// Self-adaptive loss: residual/boundary squared terms scaled by their λ.
pub fn sa_total_loss(
    nets: &[Mlp],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
    sa: &SAWeights,
) -> Result<f64> {
    Ok(eval_program(spec, nets, colloc, weights, Mode::Sa, sa.values())?.total)
}

/// total_loss plus Σᵢ w_gᵢ · mean |∂f/∂xᵢ|² over the gradient point sets.
pub fn gpinn_loss(
    nets: &[Mlp],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(eval_program(spec, nets, colloc, weights, Mode::Gpinn, &[])?.total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_f: f64,
    pub loss_b: f64,
    pub loss_i: f64,
    pub loss_g_total: f64,
    pub total: f64,
    pub l2_rel_error: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// All recorded values except wall time (which is never deterministic).
    pub fn loss_table(&self) -> Vec<(usize, f64, f64, f64, f64, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.epoch, r.loss_f, r.loss_b, r.loss_i, r.loss_g_total, r.total, r.l2_rel_error))
            .collect()
    }

    pub fn final_total(&self) -> Option<f64> {
        self.records.last().map(|r| r.total)
    }
}

/// Equispaced evaluation grid for error metrics.
pub fn eval_grid(spec: &ProblemSpec, n: usize) -> Vec<Vec<f64>> {
    let counts = CollocationCounts { interior: n, boundary: 0, data: 0, grad: 0 };
    sample_collocation(spec, counts, Strategy::Equispaced, 0)
        .map(|s| s.interior)
        .unwrap_or_default()
}

/// L² relative error of the first field against the exact solution on an
/// equispaced grid; NaN when no exact solution exists.
pub fn eval_l2_error(nets: &[Mlp], spec: &ProblemSpec, n: usize) -> Result<f64> {
    if spec.exact.is_none() {
        return Ok(f64::NAN);
    }
    let pts = eval_grid(spec, n);
    let exact: Vec<f64> = spec.exact_values(&pts)?.into_iter().map(|v| v[0]).collect();
    let mut pred = Vec::with_capacity(pts.len());
    for p in &pts {
        pred.push(nets[0].forward(p)?[0]);
    }
    crate::problems::l2_relative_error(&pred, &exact)
}

/// One trainer: compiled program, parameter buffer, Adam for θ, plain
/// ascent for λ.
pub struct Trainer {
    program: LossProgram,
    ws: Workspace,
    params: Vec<f64>,
    grads: Vec<f64>,
    adam: AdamState,
    eta_lambda: f64,
}

impl Trainer {
    pub fn new(
        spec: &ProblemSpec,
        nets: &[Mlp],
        colloc: &CollocationSet,
        weights: &LossWeights,
        mode: Mode,
        lr: f64,
        eta_lambda: f64,
    ) -> Result<Self> {
        let program = build_loss_program(spec, nets, colloc, weights, mode)?;
        let mut params: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
        params.resize(program.n_params(), 1.0); // λ start at 1
        let ws = program.workspace();
        let n = params.len();
        let n_theta = program.n_theta();
        Ok(Self {
            program,
            ws,
            params,
            grads: vec![0.0; n],
            adam: AdamState::new(n_theta, lr),
            eta_lambda,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.params[..self.program.n_theta()]
    }

    pub fn lambda(&self) -> &[f64] {
        &self.params[self.program.n_theta()..]
    }

    pub fn program(&self) -> &LossProgram {
        &self.program
    }

    /// One descent step on θ and one ascent step on λ, both from the same
    /// loss evaluation.
    pub fn descent_ascent_step(&mut self, epoch: usize) -> Result<LossValues> {
        let values = self
            .program
            .eval_grad(&self.params, &mut self.ws, &mut self.grads)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, worker: None },
                other => other,
            })?;
        let nt = self.program.n_theta();
        adam_step(&mut self.params[..nt], &self.grads[..nt], &mut self.adam)?;
        if nt < self.params.len() {
            ascent_step(&mut self.params[nt..], &self.grads[nt..], self.eta_lambda)?;
        }
        Ok(values)
    }

    /// Write trained parameters back into the networks.
    pub fn store(&self, nets: &mut [Mlp]) {
        let mut k = 0;
        for net in nets.iter_mut() {
            let n = net.n_params();
            net.read_flat(&self.params[k..k + n]);
            k += n;
        }
    }
}

/// Full training loop. Updates `nets` in place and returns the history;
/// with `Mode::Sa` the final λ values are returned as well.
#[allow(clippy::too_many_arguments)]
pub fn train(
    nets: &mut [Mlp],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
    mode: Mode,
    epochs: usize,
    lr: f64,
    eta_lambda: f64,
) -> Result<(TrainHistory, Option<SAWeights>)> {
    let mut trainer = Trainer::new(spec, nets, colloc, weights, mode, lr, eta_lambda)?;
    let mut history = TrainHistory::default();
    let start = Instant::now();
    for epoch in 0..epochs {
        let values = trainer.descent_ascent_step(epoch)?;
        if !values.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, worker: None });
        }
        trainer.store(nets);
        let l2 = eval_l2_error(nets, spec, 201)?;
        history.records.push(EpochRecord {
            epoch,
            loss_f: values.loss_f,
            loss_b: values.loss_b,
            loss_i: values.loss_i,
            loss_g_total: values.loss_g_total(),
            total: values.total,
            l2_rel_error: l2,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let sa = (mode == Mode::Sa)
        .then(|| SAWeights::from_values(spec, colloc, trainer.lambda().to_vec()))
        .transpose()?;
    Ok((history, sa))
}
