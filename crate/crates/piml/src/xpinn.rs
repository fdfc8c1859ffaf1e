//! Domain-decomposed training with per-subdomain networks and interface
//! penalties, plus a data-parallel gradient-averaging mode.
//!
//! Subdomain workers each own a compiled loss tape; the neighbour's
//! interface values (solution, residual, natural flux) enter that tape as
//! runtime inputs, refreshed once per epoch from immutable snapshots behind
//! a barrier. A worker with no interfaces runs exactly the same tape as the
//! single-domain trainer, so the one-subdomain case reproduces it
//! bit-for-bit.

use std::sync::{Barrier, Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{adam_step, AdamState, Mlp};
use crate::pinn::{
    assemble_core, emit_fields, eval_l2_error, theta_bases, EpochRecord, LossProgram, LossValues,
    LossWeights, Mode, TrainHistory,
};
use crate::problems::{CollocationSet, ProblemSpec, Rect, Strategy};
use crate::tape::{NodeId, TapeGraph, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfaceMode {
    Xpinn,
    Cpinn,
}

/// One slice of the domain with its own networks and collocation points.
pub struct Subdomain {
    pub id: usize,
    pub region: Rect,
    pub nets: Vec<Mlp>,
    pub colloc: CollocationSet,
    pub lr: f64,
}

/// Interface between subdomains `pair.0 < pair.1`: shared points on the cut
/// hyperplane, the normal pointing from the lower to the higher subdomain,
/// and the penalty weight.
#[derive(Debug, Clone)]
pub struct InterfaceSet {
    pub pair: (usize, usize),
    pub points: Vec<Vec<f64>>,
    pub normal: Vec<f64>,
    pub weight: f64,
}

/// One side's interface values for one epoch; exchanged as an immutable
/// snapshot. `fields[p][f]` is field f at point p.
#[derive(Debug, Clone, Default)]
pub struct InterfaceValues {
    pub fields: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Everything one worker published at one epoch, keyed by interface index.
#[derive(Debug, Clone, Default)]
pub struct WorkerExchange {
    pub epoch: usize,
    pub per_interface: Vec<(usize, InterfaceValues)>,
}

impl WorkerExchange {
    fn get(&self, iface: usize) -> Option<&InterfaceValues> {
        self.per_interface.iter().find(|(i, _)| *i == iface).map(|(_, v)| v)
    }
}

/// Split a box domain along axis 0 at the given cut coordinates, sampling
/// `iface_points` equispaced shared points per cut.
pub fn partition(
    domain: &Rect,
    cuts: &[f64],
    iface_points: usize,
    weight: f64,
) -> Result<(Vec<Rect>, Vec<InterfaceSet>)> {
    let (lo, hi) = (domain.lo().to_vec(), domain.hi().to_vec());
    let mut edges = vec![lo[0]];
    for &c in cuts {
        if c <= lo[0] || c >= hi[0] {
            return Err(Error::DegenerateDomain(format!(
                "cut {c} outside domain axis 0 range [{}, {}]",
                lo[0], hi[0]
            )));
        }
        edges.push(c);
    }
    edges.push(hi[0]);
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DegenerateDomain(
            "cuts must be strictly increasing and create nonempty subdomains".into(),
        ));
    }

    let mut regions = Vec::new();
    for w in edges.windows(2) {
        let mut rlo = lo.clone();
        let mut rhi = hi.clone();
        rlo[0] = w[0];
        rhi[0] = w[1];
        regions.push(Rect::new(rlo, rhi)?);
    }

    let mut interfaces = Vec::new();
    for (k, &c) in cuts.iter().enumerate() {
        let points: Vec<Vec<f64>> = if domain.dim() == 1 {
            vec![vec![c]]
        } else {
            let n = iface_points.max(1);
            (0..n)
                .map(|i| {
                    let t = if n == 1 {
                        0.5
                    } else {
                        i as f64 / (n - 1) as f64
                    };
                    vec![c, lo[1] + t * (hi[1] - lo[1])]
                })
                .collect()
        };
        let mut normal = vec![0.0; domain.dim()];
        normal[0] = 1.0;
        interfaces.push(InterfaceSet { pair: (k, k + 1), points, normal, weight });
    }
    Ok((regions, interfaces))
}

/// Restrict a problem to a subregion: same residual and exact solution, but
/// only the boundary operators whose face still lies on the global boundary.
pub fn sub_spec(spec: &ProblemSpec, region: &Rect) -> ProblemSpec {
    let mut sub = spec.clone();
    sub.boundary_ops = spec
        .boundary_ops
        .iter()
        .filter(|op| op.face.coordinate(&spec.domain) == op.face.coordinate(region))
        .cloned()
        .collect();
    sub.domain = region.clone();
    sub
}

/// Interface mismatch between two subdomain solutions (diagnostic form,
/// evaluated outside any training tape). The solution term penalizes each
/// side's deviation from the two-sided average, the residual term the jump
/// in the PDE residual; cpinn mode adds the jump in the natural normal flux.
pub fn interface_loss(
    spec: &ProblemSpec,
    nets_i: &[Mlp],
    nets_j: &[Mlp],
    iface: &InterfaceSet,
    mode: InterfaceMode,
) -> Result<f64> {
    if iface.points.is_empty() {
        return Err(Error::EmptySet("interface points".into()));
    }
    let mut sol = 0.0;
    let mut res = 0.0;
    let mut flux = 0.0;
    for p in &iface.points {
        for f in 0..spec.n_fields {
            let ui = nets_i[f].forward(p)?[0];
            let uj = nets_j[f].forward(p)?[0];
            let avg = 0.5 * (ui + uj);
            sol += (ui - avg).powi(2) + (uj - avg).powi(2);
        }
        let ri = crate::pinn::pde_residual(nets_i, spec, p)?;
        let rj = crate::pinn::pde_residual(nets_j, spec, p)?;
        res += (ri - rj).powi(2);
        if mode == InterfaceMode::Cpinn {
            let fi = eval_flux(spec, nets_i, p, &iface.normal)?;
            let fj = eval_flux(spec, nets_j, p, &iface.normal)?;
            flux += (fi - fj).powi(2);
        }
    }
    let n = iface.points.len() as f64;
    Ok((sol + res + flux) / n)
}

fn eval_flux(spec: &ProblemSpec, nets: &[Mlp], p: &[f64], normal: &[f64]) -> Result<f64> {
    let flux_fn = spec
        .flux
        .as_ref()
        .ok_or_else(|| Error::Unidentifiable(format!("{} defines no flux", spec.name)))?;
    let mut tape = TapeGraph::new(spec.spatial_dim(), spec.max_deriv_order);
    let (bases, _) = theta_bases(nets);
    let (_, fields) = emit_fields(&mut tape, nets, &bases, p)?;
    let out = flux_fn(&mut tape, &fields, normal)?;
    let params: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
    Ok(tape.eval_outputs(&params, &[], &[out])?[0])
}

/// What each runtime-input slot of a worker tape consumes from the
/// neighbour's snapshot.
enum InputKey {
    Field { iface: usize, pt: usize, field: usize },
    Residual { iface: usize, pt: usize },
    Flux { iface: usize, pt: usize },
}

struct Worker {
    id: usize,
    program: LossProgram,
    ws: Workspace,
    params: Vec<f64>,
    grads: Vec<f64>,
    inputs: Vec<f64>,
    input_map: Vec<InputKey>,
    adam: AdamState,
    /// Probe tape producing this side's interface values from its params.
    probe: TapeGraph,
    /// (iface index, per-point output ids: fields..., residual, flux?).
    probe_outputs: Vec<(usize, Vec<Vec<NodeId>>)>,
    sub: ProblemSpec,
    history: TrainHistory,
}

fn build_worker(
    spec: &ProblemSpec,
    sd: &Subdomain,
    interfaces: &[InterfaceSet],
    weights: &LossWeights,
    mode: InterfaceMode,
) -> Result<Worker> {
    let sub = sub_spec(spec, &sd.region);
    let mut core = assemble_core(&sub, &sd.nets, &sd.colloc, weights, Mode::Vanilla)?;
    let mut input_map = Vec::new();
    let mut extra = Vec::new();

    let touching: Vec<usize> = interfaces
        .iter()
        .enumerate()
        .filter(|(_, it)| it.pair.0 == sd.id || it.pair.1 == sd.id)
        .map(|(k, _)| k)
        .collect();

    for &k in &touching {
        let iface = &interfaces[k];
        if iface.points.is_empty() {
            return Err(Error::EmptySet("interface points".into()));
        }
        let tape = &mut core.tape;
        let mut sol_terms = Vec::new();
        let mut res_terms = Vec::new();
        let mut flux_terms = Vec::new();
        for (pt, p) in iface.points.iter().enumerate() {
            let (inputs, fields) = emit_fields(tape, &sd.nets, &core.bases, p)?;
            for (f, &own) in fields.iter().enumerate() {
                let other = tape.input(None);
                input_map.push(InputKey::Field { iface: k, pt, field: f });
                // own − avg(own, other) = (own − other)/2
                let d = tape.sub(own, other);
                let half = tape.scale(d, 0.5);
                sol_terms.push(tape.sq(half));
            }
            let r_own = (sub.residual)(tape, &fields, &inputs)?;
            let r_other = tape.input(None);
            input_map.push(InputKey::Residual { iface: k, pt });
            let dr = tape.sub(r_own, r_other);
            res_terms.push(tape.sq(dr));
            if mode == InterfaceMode::Cpinn {
                let flux_fn = sub.flux.as_ref().ok_or_else(|| {
                    Error::Unidentifiable(format!("{} defines no flux for cpinn mode", sub.name))
                })?;
                let f_own = flux_fn(tape, &fields, &iface.normal)?;
                let f_other = tape.input(None);
                input_map.push(InputKey::Flux { iface: k, pt });
                let df = tape.sub(f_own, f_other);
                flux_terms.push(tape.sq(df));
            }
        }
        let sol = tape.mean(&sol_terms);
        extra.push(tape.scale(sol, iface.weight));
        let res = tape.mean(&res_terms);
        extra.push(tape.scale(res, iface.weight));
        if !flux_terms.is_empty() {
            let fl = tape.mean(&flux_terms);
            extra.push(tape.scale(fl, iface.weight));
        }
    }
    let program = core.finish(extra);

    // Probe tape: this worker's own interface values, refreshed every epoch.
    let mut probe = TapeGraph::new(spec.spatial_dim(), spec.max_deriv_order);
    let (bases, _) = theta_bases(&sd.nets);
    let mut probe_outputs = Vec::new();
    for &k in &touching {
        let iface = &interfaces[k];
        let mut per_point = Vec::new();
        for p in &iface.points {
            let (inputs, fields) = emit_fields(&mut probe, &sd.nets, &bases, p)?;
            let mut outs = fields.clone();
            outs.push((sub.residual)(&mut probe, &fields, &inputs)?);
            if let Some(flux_fn) = sub.flux.as_ref() {
                outs.push(flux_fn(&mut probe, &fields, &iface.normal)?);
            }
            per_point.push(outs);
        }
        probe_outputs.push((k, per_point));
    }

    let params: Vec<f64> = sd.nets.iter().flat_map(|n| n.flat_params()).collect();
    let ws = program.workspace();
    let n = params.len();
    let n_inputs = input_map.len();
    Ok(Worker {
        id: sd.id,
        ws,
        grads: vec![0.0; program.n_params()],
        inputs: vec![0.0; n_inputs],
        input_map,
        adam: AdamState::new(n, sd.lr),
        program,
        params,
        probe,
        probe_outputs,
        sub,
        history: TrainHistory::default(),
    })
}

impl Worker {
    fn snapshot(&self, epoch: usize, n_fields: usize) -> Result<WorkerExchange> {
        if self.probe_outputs.is_empty() {
            return Ok(WorkerExchange { epoch, per_interface: Vec::new() });
        }
        let mut ws = Workspace::new(&self.probe);
        self.probe.forward(&self.params, &[], &mut ws)?;
        let mut per_interface = Vec::new();
        for (k, per_point) in &self.probe_outputs {
            let mut vals = InterfaceValues::default();
            for outs in per_point {
                let v: Vec<f64> = outs.iter().map(|&o| self.probe.value(&ws, o)).collect();
                vals.fields.push(v[..n_fields].to_vec());
                vals.residual.push(v[n_fields]);
                vals.flux.push(v.get(n_fields + 1).copied().unwrap_or(0.0));
            }
            per_interface.push((*k, vals));
        }
        Ok(WorkerExchange { epoch, per_interface })
    }

    fn gather_inputs(&mut self, epoch: usize, neighbours: &[&WorkerExchange]) -> Result<()> {
        for (slot, key) in self.input_map.iter().enumerate() {
            let (iface, pt) = match key {
                InputKey::Field { iface, pt, .. }
                | InputKey::Residual { iface, pt }
                | InputKey::Flux { iface, pt } => (*iface, *pt),
            };
            let ex = neighbours
                .iter()
                .find(|e| e.get(iface).is_some())
                .ok_or_else(|| Error::InvalidGraph(format!("no exchange for interface {iface}")))?;
            // Barrier correctness: never consume a stale snapshot.
            assert_eq!(ex.epoch, epoch, "stale interface snapshot");
            let vals = ex.get(iface).unwrap();
            self.inputs[slot] = match key {
                InputKey::Field { field, .. } => vals.fields[pt][*field],
                InputKey::Residual { .. } => vals.residual[pt],
                InputKey::Flux { .. } => vals.flux[pt],
            };
        }
        Ok(())
    }

    fn step(&mut self, epoch: usize) -> Result<LossValues> {
        let values = self
            .program
            .eval_grad_with_inputs(&self.params, &self.inputs, &mut self.ws, &mut self.grads)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, worker: Some(self.id) },
                other => other,
            })?;
        if !values.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, worker: Some(self.id) });
        }
        let nt = self.program.n_theta();
        adam_step(&mut self.params[..nt], &self.grads[..nt], &mut self.adam)?;
        Ok(values)
    }

    fn record(&mut self, epoch: usize, values: &LossValues, nets: &[Mlp], start: Instant) -> Result<()> {
        let l2 = eval_l2_error(nets, &self.sub, 201)?;
        self.history.records.push(EpochRecord {
            epoch,
            loss_f: values.loss_f,
            loss_b: values.loss_b,
            loss_i: values.loss_i,
            loss_g_total: values.loss_g_total(),
            total: values.total,
            l2_rel_error: l2,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    fn store(&self, nets: &mut [Mlp]) {
        let mut k = 0;
        for net in nets.iter_mut() {
            let n = net.n_params();
            net.read_flat(&self.params[k..k + n]);
            k += n;
        }
    }
}

#[derive(Debug, Clone)]
pub struct XpinnConfig {
    pub mode: InterfaceMode,
    pub epochs: usize,
    pub threads: usize,
    pub weights: LossWeights,
}

/// Train all subdomains. With `threads >= n_subdomains` workers run
/// concurrently and meet at a per-epoch barrier to exchange interface
/// snapshots; otherwise the same schedule runs as sequential rounds. Both
/// paths produce identical results because snapshots are taken for all
/// workers before any worker consumes them.
pub fn xpinn_train(
    spec: &ProblemSpec,
    subs: &mut [Subdomain],
    interfaces: &[InterfaceSet],
    cfg: &XpinnConfig,
) -> Result<Vec<TrainHistory>> {
    if subs.is_empty() {
        return Err(Error::EmptySet("subdomains".into()));
    }
    for it in interfaces {
        if it.pair.0 >= subs.len() || it.pair.1 >= subs.len() {
            return Err(Error::InvalidGraph(format!(
                "interface pair {:?} exceeds {} subdomains",
                it.pair,
                subs.len()
            )));
        }
    }
    let mut workers = subs
        .iter()
        .map(|sd| build_worker(spec, sd, interfaces, &cfg.weights, cfg.mode))
        .collect::<Result<Vec<_>>>()?;
    let n_fields = spec.n_fields;

    if cfg.threads >= subs.len() && subs.len() > 1 {
        run_threaded(&mut workers, interfaces, cfg.epochs, n_fields, subs)?;
    } else {
        run_sequential(&mut workers, interfaces, cfg.epochs, n_fields, subs)?;
    }

    for (worker, sd) in workers.iter().zip(subs.iter_mut()) {
        worker.store(&mut sd.nets);
    }
    Ok(workers.into_iter().map(|w| w.history).collect())
}

fn neighbour_ids(worker: usize, interfaces: &[InterfaceSet]) -> Vec<usize> {
    let mut out = Vec::new();
    for it in interfaces {
        if it.pair.0 == worker {
            out.push(it.pair.1);
        } else if it.pair.1 == worker {
            out.push(it.pair.0);
        }
    }
    out
}

fn run_sequential(
    workers: &mut [Worker],
    interfaces: &[InterfaceSet],
    epochs: usize,
    n_fields: usize,
    subs: &[Subdomain],
) -> Result<()> {
    let start = Instant::now();
    for epoch in 0..epochs {
        let snapshots = workers
            .iter()
            .map(|w| w.snapshot(epoch, n_fields))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..workers.len() {
            let nbs: Vec<&WorkerExchange> = neighbour_ids(i, interfaces)
                .into_iter()
                .map(|j| &snapshots[j])
                .collect();
            workers[i].gather_inputs(epoch, &nbs)?;
            let values = workers[i].step(epoch)?;
            let mut nets = subs[i].nets.clone();
            workers[i].store(&mut nets);
            workers[i].record(epoch, &values, &nets, start)?;
        }
    }
    Ok(())
}

fn run_threaded(
    workers: &mut [Worker],
    interfaces: &[InterfaceSet],
    epochs: usize,
    n_fields: usize,
    subs: &[Subdomain],
) -> Result<()> {
    let n = workers.len();
    let barrier = Barrier::new(n);
    let boards: Vec<RwLock<WorkerExchange>> =
        (0..n).map(|_| RwLock::new(WorkerExchange::default())).collect();
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let start = Instant::now();

    std::thread::scope(|scope| {
        for (i, worker) in workers.iter_mut().enumerate() {
            let barrier = &barrier;
            let boards = &boards;
            let failure = &failure;
            let nets_proto = subs[i].nets.clone();
            scope.spawn(move || {
                let mut nets = nets_proto;
                for epoch in 0..epochs {
                    let step = (|| -> Result<()> {
                        let snap = worker.snapshot(epoch, n_fields)?;
                        *boards[i].write().unwrap() = snap;
                        Ok(())
                    })();
                    if let Err(e) = step {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                    barrier.wait();
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                    let step = (|| -> Result<()> {
                        let guards: Vec<_> = neighbour_ids(i, interfaces)
                            .into_iter()
                            .map(|j| boards[j].read().unwrap())
                            .collect();
                        let nbs: Vec<&WorkerExchange> = guards.iter().map(|g| &**g).collect();
                        worker.gather_inputs(epoch, &nbs)?;
                        let values = worker.step(epoch)?;
                        worker.store(&mut nets);
                        worker.record(epoch, &values, &nets, start)
                    })();
                    if let Err(e) = step {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                    // Second barrier: nobody rewrites its board while a
                    // neighbour may still be reading this epoch's snapshot.
                    barrier.wait();
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                }
            });
        }
    });

    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Evaluate the stitched global solution: the owning subdomain's networks,
/// or the average of all owners on shared interfaces.
pub fn stitch_predict(subs: &[Subdomain], x: &[f64]) -> Result<Vec<f64>> {
    let owners: Vec<&Subdomain> = subs.iter().filter(|s| s.region.contains(x)).collect();
    if owners.is_empty() {
        return Err(Error::OutsideDomain(x.to_vec()));
    }
    let n_fields = owners[0].nets.len();
    let mut out = vec![0.0; n_fields];
    for sd in &owners {
        for (f, net) in sd.nets.iter().enumerate() {
            out[f] += net.forward(x)?[0];
        }
    }
    for v in out.iter_mut() {
        *v /= owners.len() as f64;
    }
    Ok(out)
}

/// Elementwise mean over replica gradients, summed in ascending replica
/// order so the reduction is reproducible.
pub fn allreduce_mean(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = grads.first().ok_or_else(|| Error::EmptySet("gradient sets".into()))?;
    if grads.iter().any(|g| g.len() != first.len()) {
        return Err(Error::ShapeMismatch("replica gradient lengths differ".into()));
    }
    let mut out = vec![0.0; first.len()];
    for g in grads {
        for (o, v) in out.iter_mut().zip(g) {
            *o += v;
        }
    }
    let r = grads.len() as f64;
    for o in out.iter_mut() {
        *o /= r;
    }
    Ok(out)
}

/// Replicated trainer: identical networks, chunked interior points,
/// gradients averaged with [`allreduce_mean`], lockstep Adam updates with
/// the learning rate scaled by the replica count.
pub struct DataParallelTrainer {
    programs: Vec<LossProgram>,
    workspaces: Vec<Workspace>,
    params: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    adams: Vec<AdamState>,
}

impl DataParallelTrainer {
    pub fn new(
        spec: &ProblemSpec,
        nets: &[Mlp],
        colloc: &CollocationSet,
        weights: &LossWeights,
        replicas: usize,
        base_lr: f64,
        pad: bool,
    ) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::EmptySet("replicas".into()));
        }
        let mut interior = colloc.interior.clone();
        if interior.len() % replicas != 0 {
            if !pad {
                return Err(Error::Config {
                    path: "data_parallel".into(),
                    msg: format!(
                        "{} interior points not divisible by {} replicas (enable padding or resize)",
                        interior.len(),
                        replicas
                    ),
                });
            }
            let mut k = 0;
            while interior.len() % replicas != 0 {
                interior.push(colloc.interior[k % colloc.interior.len()].clone());
                k += 1;
            }
        }
        let chunk = interior.len() / replicas;
        let theta: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
        let mut programs = Vec::with_capacity(replicas);
        for r in 0..replicas {
            let local = CollocationSet {
                interior: interior[r * chunk..(r + 1) * chunk].to_vec(),
                boundary: colloc.boundary.clone(),
                data: colloc.data.clone(),
                grad: colloc.grad.clone(),
            };
            programs.push(crate::pinn::build_loss_program(
                spec,
                nets,
                &local,
                weights,
                Mode::Vanilla,
            )?);
        }
        let workspaces = programs.iter().map(|p| p.workspace()).collect();
        let n = theta.len();
        Ok(Self {
            workspaces,
            params: vec![theta; replicas],
            grads: vec![vec![0.0; n]; replicas],
            adams: (0..replicas).map(|_| AdamState::new(n, base_lr * replicas as f64)).collect(),
            programs,
        })
    }

    pub fn replicas(&self) -> usize {
        self.programs.len()
    }

    pub fn replica_params(&self, r: usize) -> &[f64] {
        &self.params[r]
    }

    /// Per-replica chunk gradients before reduction (diagnostic).
    pub fn chunk_gradients(&mut self, epoch: usize) -> Result<Vec<Vec<f64>>> {
        for r in 0..self.replicas() {
            self.programs[r]
                .eval_grad(&self.params[r], &mut self.workspaces[r], &mut self.grads[r])
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, worker: Some(r) },
                    other => other,
                })?;
        }
        Ok(self.grads.clone())
    }

    /// One lockstep epoch; returns the replica-averaged loss components.
    pub fn step(&mut self, epoch: usize) -> Result<LossValues> {
        let mut totals = LossValues { total: 0.0, loss_f: 0.0, loss_b: 0.0, loss_i: 0.0, loss_g: vec![] };
        for r in 0..self.replicas() {
            let v = self.programs[r]
                .eval_grad(&self.params[r], &mut self.workspaces[r], &mut self.grads[r])
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { epoch, worker: Some(r) },
                    other => other,
                })?;
            totals.total += v.total;
            totals.loss_f += v.loss_f;
            totals.loss_b += v.loss_b;
            totals.loss_i += v.loss_i;
        }
        let r = self.replicas() as f64;
        totals.total /= r;
        totals.loss_f /= r;
        totals.loss_b /= r;
        totals.loss_i /= r;
        if !totals.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, worker: None });
        }
        let avg = allreduce_mean(&self.grads)?;
        for r in 0..self.replicas() {
            adam_step(&mut self.params[r], &avg, &mut self.adams[r])?;
        }
        Ok(totals)
    }

    pub fn store(&self, nets: &mut [Mlp]) {
        let mut k = 0;
        for net in nets.iter_mut() {
            let n = net.n_params();
            net.read_flat(&self.params[0][k..k + n]);
            k += n;
        }
    }
}

/// Full data-parallel training loop; updates `nets` in place.
#[allow(clippy::too_many_arguments)]
pub fn data_parallel_train(
    nets: &mut [Mlp],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
    replicas: usize,
    epochs: usize,
    base_lr: f64,
    pad: bool,
) -> Result<TrainHistory> {
    let mut trainer = DataParallelTrainer::new(spec, nets, colloc, weights, replicas, base_lr, pad)?;
    let mut history = TrainHistory::default();
    let start = Instant::now();
    for epoch in 0..epochs {
        let values = trainer.step(epoch)?;
        trainer.store(nets);
        let l2 = eval_l2_error(nets, spec, 201)?;
        history.records.push(EpochRecord {
            epoch,
            loss_f: values.loss_f,
            loss_b: values.loss_b,
            loss_i: values.loss_i,
            loss_g_total: 0.0,
            total: values.total,
            l2_rel_error: l2,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        debug_assert!(
            (1..trainer.replicas()).all(|r| trainer.params[r] == trainer.params[0]),
            "replicas diverged"
        );
    }
    Ok(history)
}

/// Convenience: sample collocation restricted to each region and attach
/// freshly initialized networks.
pub fn build_subdomains(
    spec: &ProblemSpec,
    regions: &[Rect],
    make_nets: &dyn Fn(usize) -> Result<Vec<Mlp>>,
    counts: crate::problems::CollocationCounts,
    strategy: Strategy,
    seed: u64,
    lr: f64,
) -> Result<Vec<Subdomain>> {
    regions
        .iter()
        .enumerate()
        .map(|(id, region)| {
            let sub = sub_spec(spec, region);
            let colloc = crate::problems::sample_collocation(&sub, counts, strategy, seed + id as u64)?;
            Ok(Subdomain { id, region: region.clone(), nets: make_nets(id)?, colloc, lr })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use crate::pinn::{train, LossWeights};
    use crate::problems::{
        poisson1d_spec, sample_collocation, CollocationCounts, ProblemSpec,
    };
    use approx::assert_relative_eq;

    fn poisson_nets(seed: u64) -> Vec<Mlp> {
        vec![Mlp::init(&[1, 10, 1], Activation::Tanh, seed).unwrap()]
    }

    #[test]
    fn partition_examples() {
        let d = Rect::new(vec![-1.0], vec![1.0]).unwrap();
        let (regions, ifaces) = partition(&d, &[0.0], 1, 20.0).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(ifaces.len(), 1);
        assert_eq!(ifaces[0].points, vec![vec![0.0]]);
        assert_eq!(regions[0].hi()[0], 0.0);
        assert_eq!(regions[1].lo()[0], 0.0);

        let sq = Rect::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (_, ifaces) = partition(&sq, &[0.5], 7, 20.0).unwrap();
        assert!(ifaces[0].points.iter().all(|p| p[0] == 0.5));
        assert_eq!(ifaces[0].points.len(), 7);
        // Interface points lie in both adjacent regions' closures.
        let (regions, _) = partition(&sq, &[0.5], 7, 20.0).unwrap();
        for p in &ifaces[0].points {
            assert!(regions[0].contains(p) && regions[1].contains(p));
        }

        // 10-region split.
        let cuts: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let (regions, ifaces) = partition(&sq, &cuts, 3, 20.0).unwrap();
        assert_eq!(regions.len(), 10);
        assert_eq!(ifaces.len(), 9);

        assert!(partition(&d, &[2.0], 1, 20.0).is_err());
        assert!(partition(&d, &[0.3, 0.3], 1, 20.0).is_err());
        assert!(partition(&d, &[0.5, 0.2], 1, 20.0).is_err());
    }

    #[test]
    fn sub_spec_keeps_only_global_boundary_ops() {
        let spec = poisson1d_spec(1.0).unwrap();
        let (regions, _) = partition(&spec.domain, &[0.5], 1, 20.0).unwrap();
        let left = sub_spec(&spec, &regions[0]);
        let right = sub_spec(&spec, &regions[1]);
        assert_eq!(left.boundary_ops.len(), 1);
        assert_eq!(left.boundary_ops[0].name, "u(0)");
        assert_eq!(right.boundary_ops.len(), 1);
        assert_eq!(right.boundary_ops[0].name, "u(1)");
    }

    #[test]
    fn interface_loss_examples() {
        let spec = poisson1d_spec(1.0).unwrap();
        let iface = InterfaceSet {
            pair: (0, 1),
            points: vec![vec![0.5]],
            normal: vec![1.0],
            weight: 20.0,
        };
        // Identical networks on both sides → 0.
        let a = poisson_nets(1);
        assert_eq!(
            interface_loss(&spec, &a, &a, &iface, InterfaceMode::Xpinn).unwrap(),
            0.0
        );
        assert_eq!(
            interface_loss(&spec, &a, &a, &iface, InterfaceMode::Cpinn).unwrap(),
            0.0
        );

        // û_i = 1, û_j = 3, equal residuals (both constant nets): term = 2.
        let mut ni = Mlp::init(&[1, 1], Activation::Tanh, 0).unwrap();
        ni.read_flat(&[0.0, 1.0]);
        let mut nj = ni.clone();
        nj.read_flat(&[0.0, 3.0]);
        let l = interface_loss(&spec, &[ni.clone()], &[nj.clone()], &iface, InterfaceMode::Xpinn).unwrap();
        assert_relative_eq!(l, 2.0, max_relative = 1e-12);
        // Symmetry.
        let l_swapped =
            interface_loss(&spec, &[nj], &[ni], &iface, InterfaceMode::Xpinn).unwrap();
        assert!((l - l_swapped).abs() <= 1e-15);
    }

    #[test]
    fn single_subdomain_reduces_to_plain_training() {
        let spec = poisson1d_spec(1.0).unwrap();
        let counts = CollocationCounts { interior: 12, boundary: 2, data: 0, grad: 0 };
        let weights = LossWeights::ones(1);

        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, 10).unwrap();
        let mut plain = poisson_nets(3);
        let (h_plain, _) = train(
            &mut plain, &spec, &colloc, &weights, Mode::Vanilla, 30, 1e-3, 0.0,
        )
        .unwrap();

        let mut subs = vec![Subdomain {
            id: 0,
            region: spec.domain.clone(),
            nets: poisson_nets(3),
            colloc,
            lr: 1e-3,
        }];
        let cfg = XpinnConfig {
            mode: InterfaceMode::Xpinn,
            epochs: 30,
            threads: 1,
            weights,
        };
        let hs = xpinn_train(&spec, &mut subs, &[], &cfg).unwrap();
        assert_eq!(hs[0].loss_table(), h_plain.loss_table());
        assert_eq!(subs[0].nets[0].flat_params(), plain[0].flat_params());
    }

    fn two_domain_setup(seed: u64) -> (ProblemSpec, Vec<Subdomain>, Vec<InterfaceSet>) {
        let spec = poisson1d_spec(1.0).unwrap();
        let (regions, ifaces) = partition(&spec.domain, &[0.5], 1, 20.0).unwrap();
        let counts = CollocationCounts { interior: 10, boundary: 1, data: 0, grad: 0 };
        let subs = build_subdomains(
            &spec,
            &regions,
            &|id| Ok(poisson_nets(seed + id as u64)),
            counts,
            Strategy::UniformRandom,
            seed,
            2e-3,
        )
        .unwrap();
        (spec, subs, ifaces)
    }

    #[test]
    fn threaded_and_sequential_runs_are_identical() {
        let run = |threads: usize| {
            let (spec, mut subs, ifaces) = two_domain_setup(5);
            let cfg = XpinnConfig {
                mode: InterfaceMode::Xpinn,
                epochs: 20,
                threads,
                weights: LossWeights::ones(1),
            };
            let hs = xpinn_train(&spec, &mut subs, &ifaces, &cfg).unwrap();
            let tables: Vec<_> = hs.iter().map(|h| h.loss_table()).collect();
            let params: Vec<_> = subs.iter().map(|s| s.nets[0].flat_params()).collect();
            (tables, params)
        };
        let sequential = run(1);
        let threaded = run(8);
        assert_eq!(sequential.0, threaded.0);
        assert_eq!(sequential.1, threaded.1);
    }

    #[test]
    fn xpinn_rerun_with_same_seed_is_identical() {
        let run = || {
            let (spec, mut subs, ifaces) = two_domain_setup(7);
            let cfg = XpinnConfig {
                mode: InterfaceMode::Cpinn,
                epochs: 10,
                threads: 2,
                weights: LossWeights::ones(1),
            };
            xpinn_train(&spec, &mut subs, &ifaces, &cfg)
                .unwrap()
                .iter()
                .map(|h| h.loss_table())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn two_subdomain_poisson_interface_converges() {
        let (spec, mut subs, ifaces) = two_domain_setup(2);
        let cfg = XpinnConfig {
            mode: InterfaceMode::Xpinn,
            epochs: 1500,
            threads: 2,
            weights: LossWeights::ones(1),
        };
        xpinn_train(&spec, &mut subs, &ifaces, &cfg).unwrap();
        let il = interface_loss(&spec, &subs[0].nets, &subs[1].nets, &ifaces[0], InterfaceMode::Xpinn)
            .unwrap();
        assert!(il <= 1e-2, "final interface loss {il}");

        // Stitched jump at the interface is bounded by the solution loss.
        let p = &ifaces[0].points[0];
        let ui = subs[0].nets[0].forward(p).unwrap()[0];
        let uj = subs[1].nets[0].forward(p).unwrap()[0];
        // Solution part of the interface loss alone.
        let sol = 0.5 * (ui - uj).powi(2);
        assert!((ui - uj).abs() <= 10.0 * sol.sqrt().max(1e-12));
        // Stitch averages the two sides.
        let stitched = stitch_predict(&subs, p).unwrap()[0];
        assert_relative_eq!(stitched, 0.5 * (ui + uj), max_relative = 1e-14);
    }

    #[test]
    fn stitch_predict_ownership_rules() {
        let (_, subs, _) = two_domain_setup(3);
        // Strictly inside the second region.
        let inside = vec![0.9];
        let direct = subs[1].nets[0].forward(&inside).unwrap()[0];
        assert_eq!(stitch_predict(&subs, &inside).unwrap()[0], direct);
        assert!(stitch_predict(&subs, &[2.5]).is_err());
    }

    #[test]
    fn allreduce_examples() {
        assert_eq!(allreduce_mean(&[vec![1.0], vec![3.0]]).unwrap(), vec![2.0]);
        assert_eq!(allreduce_mean(&[vec![5.0, -1.0]]).unwrap(), vec![5.0, -1.0]);
        assert_eq!(
            allreduce_mean(&[vec![2.0], vec![4.0], vec![6.0]]).unwrap(),
            vec![4.0]
        );
        assert!(allreduce_mean(&[]).is_err());
        assert!(allreduce_mean(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn data_parallel_single_replica_reduces_to_plain_training() {
        let spec = poisson1d_spec(1.0).unwrap();
        let counts = CollocationCounts { interior: 12, boundary: 2, data: 0, grad: 0 };
        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, 4).unwrap();
        let weights = LossWeights::ones(1);

        let mut plain = poisson_nets(8);
        let (h_plain, _) =
            train(&mut plain, &spec, &colloc, &weights, Mode::Vanilla, 25, 1e-3, 0.0).unwrap();

        let mut dp = poisson_nets(8);
        let h_dp =
            data_parallel_train(&mut dp, &spec, &colloc, &weights, 1, 25, 1e-3, false).unwrap();
        assert_eq!(h_plain.loss_table(), h_dp.loss_table());
        assert_eq!(plain[0].flat_params(), dp[0].flat_params());
    }

    #[test]
    fn averaged_chunk_gradient_equals_full_batch_gradient() {
        let spec = poisson1d_spec(1.0).unwrap();
        let counts = CollocationCounts { interior: 16, boundary: 2, data: 0, grad: 0 };
        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, 6).unwrap();
        let weights = LossWeights::ones(1);
        let nets = poisson_nets(9);

        let mut dp =
            DataParallelTrainer::new(&spec, &nets, &colloc, &weights, 2, 1e-3, false).unwrap();
        let avg = allreduce_mean(&dp.chunk_gradients(0).unwrap()).unwrap();

        let program =
            crate::pinn::build_loss_program(&spec, &nets, &colloc, &weights, Mode::Vanilla).unwrap();
        let mut full = vec![0.0; program.n_params()];
        program
            .eval_grad(&nets[0].flat_params(), &mut program.workspace(), &mut full)
            .unwrap();
        for (a, f) in avg.iter().zip(&full) {
            assert!((a - f).abs() <= 1e-12, "avg {a} vs full {f}");
        }
    }

    #[test]
    fn replicas_stay_in_lockstep() {
        let spec = poisson1d_spec(1.0).unwrap();
        let counts = CollocationCounts { interior: 12, boundary: 2, data: 0, grad: 0 };
        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, 3).unwrap();
        let weights = LossWeights::ones(1);
        let nets = poisson_nets(5);
        let mut dp =
            DataParallelTrainer::new(&spec, &nets, &colloc, &weights, 3, 1e-3, false).unwrap();
        for epoch in 0..10 {
            dp.step(epoch).unwrap();
            for r in 1..dp.replicas() {
                assert_eq!(dp.replica_params(r), dp.replica_params(0));
            }
        }
    }

    #[test]
    fn indivisible_chunking_errors_without_padding() {
        let spec = poisson1d_spec(1.0).unwrap();
        let counts = CollocationCounts { interior: 10, boundary: 2, data: 0, grad: 0 };
        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, 3).unwrap();
        let weights = LossWeights::ones(1);
        let nets = poisson_nets(5);
        assert!(
            DataParallelTrainer::new(&spec, &nets, &colloc, &weights, 3, 1e-3, false).is_err()
        );
        let dp = DataParallelTrainer::new(&spec, &nets, &colloc, &weights, 3, 1e-3, true).unwrap();
        assert_eq!(dp.replicas(), 3);
    }
}
