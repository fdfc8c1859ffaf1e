//! Benchmark problem registry: domains, residuals, boundary operators,
//! exact solutions, and collocation sampling.
//!
//! Residuals and exact solutions are expressed as tape-builder closures so
//! the same definition serves training (differentiable in the network
//! parameters), plug-back self-consistency checks, and forcing terms derived
//! by exact differentiation of the closed forms.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{NodeId, TapeGraph, Workspace};

/// Axis-aligned box domain (1d or 2d in the built-in problems).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "rect bounds {:?} vs {:?}",
                lo, hi
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::DegenerateDomain(format!(
                "rect {:?}..{:?} has zero measure",
                lo, hi
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Closure membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// One face of a [`Rect`]: the set where coordinate `axis` equals the lower
/// or upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub hi_side: bool,
}

impl Face {
    pub fn coordinate(&self, rect: &Rect) -> f64 {
        if self.hi_side {
            rect.hi[self.axis]
        } else {
            rect.lo[self.axis]
        }
    }

    /// Outward unit normal.
    pub fn normal(&self, dim: usize) -> Vec<f64> {
        let mut n = vec![0.0; dim];
        n[self.axis] = if self.hi_side { 1.0 } else { -1.0 };
        n
    }
}

type TargetFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ResidualFn = Arc<dyn Fn(&mut TapeGraph, &[NodeId], &[NodeId]) -> Result<NodeId> + Send + Sync>;
type ExactFn = Arc<dyn Fn(&mut TapeGraph, &[NodeId]) -> Vec<NodeId> + Send + Sync>;
type FluxFn = Arc<dyn Fn(&mut TapeGraph, &[NodeId], &[f64]) -> Result<NodeId> + Send + Sync>;

/// Distinguishes spatial boundary conditions from initial conditions; the
/// self-adaptive trainer keeps a separate weight family per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Spatial,
    Initial,
}

/// A Dirichlet constraint on one field over one domain face.
#[derive(Clone)]
pub struct BoundaryOp {
    pub name: String,
    pub field: usize,
    pub face: Face,
    pub kind: BoundaryKind,
    pub target: TargetFn,
}

/// Where measurement data for a field lives (inverse problems).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSite {
    None,
    Interior,
    Boundary,
}

/// A benchmark problem: domain, differential residual, boundary operators,
/// and (when known) the exact solution as a tape expression.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Rect,
    pub n_fields: usize,
    /// Highest input-derivative order the residual consumes (≤ 3).
    pub max_deriv_order: usize,
    /// Builds the residual node from field-output nodes and seeded inputs.
    pub residual: ResidualFn,
    pub boundary_ops: Vec<BoundaryOp>,
    /// Exact solution (all fields) as tape expressions of the inputs.
    pub exact: Option<ExactFn>,
    /// Per-field data placement for inverse problems.
    pub data_sites: Vec<DataSite>,
    /// Suggested constant output offset per field, for fields far from O(1).
    pub field_offsets: Vec<f64>,
    /// Natural flux through a surface with the given outward normal
    /// (built from field nodes), for conservative interface conditions.
    pub flux: Option<FluxFn>,
}

impl ProblemSpec {
    pub fn spatial_dim(&self) -> usize {
        self.domain.dim()
    }

    /// Exact field values at many points.
    pub fn exact_values(&self, pts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::Unidentifiable(format!("{} has no exact solution", self.name)))?;
        let mut tape = TapeGraph::new(self.spatial_dim(), 0);
        let inputs: Vec<NodeId> = (0..self.spatial_dim()).map(|a| tape.input(Some(a))).collect();
        let fields = exact(&mut tape, &inputs);
        let mut ws = Workspace::new(&tape);
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            tape.forward(&[], p, &mut ws)?;
            out.push(fields.iter().map(|&f| tape.value(&ws, f)).collect());
        }
        Ok(out)
    }

    /// Residual evaluated on the exact solution (plug-back check).
    pub fn residual_at_exact(&self, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::Unidentifiable(format!("{} has no exact solution", self.name)))?;
        let mut tape = TapeGraph::new(self.spatial_dim(), self.max_deriv_order);
        let inputs: Vec<NodeId> = (0..self.spatial_dim()).map(|a| tape.input(Some(a))).collect();
        let fields = exact(&mut tape, &inputs);
        let r = (self.residual)(&mut tape, &fields, &inputs)?;
        let mut ws = Workspace::new(&tape);
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            tape.forward(&[], p, &mut ws)?;
            out.push(tape.value(&ws, r));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    UniformRandom,
    Equispaced,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub interior: usize,
    pub boundary: usize,
    #[serde(default)]
    pub data: usize,
    #[serde(default)]
    pub grad: usize,
}

/// Sampled training point sets.
#[derive(Debug, Clone, Default)]
pub struct CollocationSet {
    pub interior: Vec<Vec<f64>>,
    /// (boundary-op index, point).
    pub boundary: Vec<(usize, Vec<f64>)>,
    /// (field index, point, target value).
    pub data: Vec<(usize, Vec<f64>, f64)>,
    /// Gradient-loss points, one list per input axis.
    pub grad: Vec<Vec<Vec<f64>>>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn sample_box(rect: &Rect, n: usize, strategy: Strategy, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = rect.dim();
    match strategy {
        Strategy::UniformRandom => (0..n)
            .map(|_| {
                (0..d)
                    .map(|a| rng.gen_range(rect.lo[a]..rect.hi[a]))
                    .collect()
            })
            .collect(),
        Strategy::Equispaced => {
            if d == 1 {
                linspace(rect.lo[0], rect.hi[0], n).into_iter().map(|x| vec![x]).collect()
            } else {
                let side = (n as f64).sqrt().ceil() as usize;
                let xs = linspace(rect.lo[0], rect.hi[0], side);
                let ys = linspace(rect.lo[1], rect.hi[1], side.max(1));
                let mut out = Vec::with_capacity(n);
                'outer: for y in &ys {
                    for x in &xs {
                        if out.len() == n {
                            break 'outer;
                        }
                        out.push(vec![*x, *y]);
                    }
                }
                out
            }
        }
    }
}

fn sample_face(
    rect: &Rect,
    face: Face,
    n: usize,
    strategy: Strategy,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let d = rect.dim();
    let fixed = face.coordinate(rect);
    if d == 1 {
        return vec![vec![fixed]; n];
    }
    let free = 1 - face.axis;
    let coords = match strategy {
        Strategy::UniformRandom => (0..n)
            .map(|_| rng.gen_range(rect.lo[free]..rect.hi[free]))
            .collect(),
        Strategy::Equispaced => linspace(rect.lo[free], rect.hi[free], n),
    };
    coords
        .into_iter()
        .map(|c| {
            let mut p = vec![0.0; d];
            p[face.axis] = fixed;
            p[free] = c;
            p
        })
        .collect()
}

fn all_faces(dim: usize) -> Vec<Face> {
    (0..dim)
        .flat_map(|axis| [Face { axis, hi_side: false }, Face { axis, hi_side: true }])
        .collect()
}

fn split_counts(total: usize, bins: usize) -> Vec<usize> {
    let base = total / bins;
    (0..bins).map(|i| base + usize::from(i < total % bins)).collect()
}

/// Deterministic collocation sampling. Boundary points are distributed
/// round-robin over the spec's boundary operators and land exactly on their
/// faces; data points follow each field's [`DataSite`] with targets taken
/// from the exact solution.
pub fn sample_collocation(
    spec: &ProblemSpec,
    counts: CollocationCounts,
    strategy: Strategy,
    seed: u64,
) -> Result<CollocationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = CollocationSet {
        interior: sample_box(&spec.domain, counts.interior, strategy, &mut rng),
        ..Default::default()
    };

    if counts.boundary > 0 && !spec.boundary_ops.is_empty() {
        for (op_idx, n) in split_counts(counts.boundary, spec.boundary_ops.len())
            .into_iter()
            .enumerate()
        {
            let face = spec.boundary_ops[op_idx].face;
            for p in sample_face(&spec.domain, face, n, strategy, &mut rng) {
                set.boundary.push((op_idx, p));
            }
        }
    }

    if counts.data > 0 {
        for (field, site) in spec.data_sites.iter().enumerate() {
            let pts = match site {
                DataSite::None => continue,
                DataSite::Interior => sample_box(&spec.domain, counts.data, strategy, &mut rng),
                DataSite::Boundary => {
                    let faces = all_faces(spec.spatial_dim());
                    let mut pts = Vec::new();
                    for (face, n) in faces.iter().zip(split_counts(counts.data, faces.len())) {
                        pts.extend(sample_face(&spec.domain, *face, n, strategy, &mut rng));
                    }
                    pts
                }
            };
            let values = spec.exact_values(&pts)?;
            for (p, v) in pts.into_iter().zip(values) {
                set.data.push((field, p, v[field]));
            }
        }
    }

    if counts.grad > 0 {
        for _axis in 0..spec.spatial_dim() {
            set.grad
                .push(sample_box(&spec.domain, counts.grad, strategy, &mut rng));
        }
    }

    Ok(set)
}

/// ‖pred − exact‖₂ / ‖exact‖₂.
pub fn l2_relative_error(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} exact samples",
            pred.len(),
            exact.len()
        )));
    }
    let denom: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::Unidentifiable(
            "exact field has zero norm".to_string(),
        ));
    }
    let num: f64 = pred
        .iter()
        .zip(exact)
        .map(|(p, e)| (p - e) * (p - e))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Boundary-layer ODE ν·u″ − u = eˣ on [−1, 1] with u(−1) = 1, u(1) = 0.
///
/// The exact solution A·e^{x/√ν} + B·e^{−x/√ν} + eˣ/(ν−1) is a standard
/// linear-ODE solve; the plug-back test validates it before it is trusted.
pub fn bl_ode_spec(nu: f64) -> Result<ProblemSpec> {
    if nu <= 0.0 {
        return Err(Error::Config {
            path: "problem_params.nu".into(),
            msg: format!("viscosity must be positive, got {nu}"),
        });
    }
    if nu == 1.0 {
        return Err(Error::Config {
            path: "problem_params.nu".into(),
            msg: "nu = 1 makes the particular solution e^x/(nu-1) singular".into(),
        });
    }
    let s = nu.sqrt();
    let c = 1.0 / (nu - 1.0);
    // Solve the 2x2 system for the homogeneous coefficients from the BCs.
    let (m00, m01) = ((-1.0 / s).exp(), (1.0 / s).exp());
    let (r0, r1) = (1.0 - c * (-1.0f64).exp(), -c * 1.0f64.exp());
    let det = m00 * m00 - m01 * m01;
    let a = (r0 * m00 - r1 * m01) / det;
    let b = (r1 * m00 - r0 * m01) / det;

    let exact: ExactFn = Arc::new(move |t: &mut TapeGraph, inputs: &[NodeId]| {
        let x = inputs[0];
        let g1 = t.scale(x, 1.0 / s);
        let e1 = t.exp(g1);
        let t1 = t.scale(e1, a);
        let g2 = t.scale(x, -1.0 / s);
        let e2 = t.exp(g2);
        let t2 = t.scale(e2, b);
        let ex = t.exp(x);
        let t3 = t.scale(ex, c);
        let s12 = t.add(t1, t2);
        vec![t.add(s12, t3)]
    });

    let residual: ResidualFn = Arc::new(move |t: &mut TapeGraph, fields: &[NodeId], inputs: &[NodeId]| {
        let u = fields[0];
        let ux = t.deriv(u, 0)?;
        let uxx = t.deriv(ux, 0)?;
        let lhs = t.scale(uxx, nu);
        let d = t.sub(lhs, u);
        let ex = t.exp(inputs[0]);
        Ok(t.sub(d, ex))
    });

    Ok(ProblemSpec {
        name: "bl_ode".into(),
        domain: Rect::new(vec![-1.0], vec![1.0])?,
        n_fields: 1,
        max_deriv_order: 2,
        residual,
        boundary_ops: vec![
            BoundaryOp {
                name: "u(-1)=1".into(),
                field: 0,
                face: Face { axis: 0, hi_side: false },
                kind: BoundaryKind::Spatial,
                target: Arc::new(|_| 1.0),
            },
            BoundaryOp {
                name: "u(1)=0".into(),
                field: 0,
                face: Face { axis: 0, hi_side: true },
                kind: BoundaryKind::Spatial,
                target: Arc::new(|_| 0.0),
            },
        ],
        exact: Some(exact),
        data_sites: vec![DataSite::None],
        field_offsets: vec![0.0],
        flux: Some(gradient_flux()),
    })
}

/// Normal flux ∇u·n of the first field.
fn gradient_flux() -> FluxFn {
    Arc::new(|t: &mut TapeGraph, fields: &[NodeId], normal: &[f64]| {
        let u = fields[0];
        let mut terms = Vec::new();
        for (axis, &n) in normal.iter().enumerate() {
            if n != 0.0 {
                let du = t.deriv(u, axis)?;
                terms.push(t.scale(du, n));
            }
        }
        Ok(t.sum(&terms))
    })
}

fn dr_solution_profile(t: &mut TapeGraph, x: NodeId) -> NodeId {
    // Σ_{i=1..4} sin(ix)/i + sin(8x)/8
    let mut terms = Vec::new();
    for i in [1.0, 2.0, 3.0, 4.0, 8.0] {
        let sx = t.scale(x, i);
        let s = t.sin(sx);
        terms.push(t.scale(s, 1.0 / i));
    }
    t.sum(&terms)
}

/// Diffusion–reaction u_t = u_xx + R(x,t) on [−π,π]×[0,1] with homogeneous
/// Dirichlet ends and the multi-frequency sine initial profile; the reaction
/// term makes u(x,t) = e^{−t}·(Σ_{i≤4} sin(ix)/i + sin(8x)/8) exact.
pub fn diffusion_reaction_spec() -> Result<ProblemSpec> {
    let exact: ExactFn = Arc::new(|t: &mut TapeGraph, inputs: &[NodeId]| {
        let profile = dr_solution_profile(t, inputs[0]);
        let nt = t.neg(inputs[1]);
        let emt = t.exp(nt);
        vec![t.mul(emt, profile)]
    });

    let residual: ResidualFn = Arc::new(|t: &mut TapeGraph, fields: &[NodeId], inputs: &[NodeId]| {
        let u = fields[0];
        let ut = t.deriv(u, 1)?;
        let ux = t.deriv(u, 0)?;
        let uxx = t.deriv(ux, 0)?;
        // R(x,t) = e^{-t} (3/2 sin 2x + 8/3 sin 3x + 15/4 sin 4x + 63/8 sin 8x)
        let mut terms = Vec::new();
        for (k, c) in [(2.0, 1.5), (3.0, 8.0 / 3.0), (4.0, 15.0 / 4.0), (8.0, 63.0 / 8.0)] {
            let sx = t.scale(inputs[0], k);
            let s = t.sin(sx);
            terms.push(t.scale(s, c));
        }
        let series = t.sum(&terms);
        let nt = t.neg(inputs[1]);
        let emt = t.exp(nt);
        let r_term = t.mul(emt, series);
        let d = t.sub(ut, uxx);
        Ok(t.sub(d, r_term))
    });

    let initial_profile: TargetFn = Arc::new(|p: &[f64]| {
        let x = p[0];
        [1.0f64, 2.0, 3.0, 4.0, 8.0]
            .iter()
            .map(|i| (i * x).sin() / i)
            .sum()
    });

    Ok(ProblemSpec {
        name: "diffusion_reaction".into(),
        domain: Rect::new(vec![-PI, 0.0], vec![PI, 1.0])?,
        n_fields: 1,
        max_deriv_order: 2,
        residual,
        boundary_ops: vec![
            BoundaryOp {
                name: "u(-pi,t)=0".into(),
                field: 0,
                face: Face { axis: 0, hi_side: false },
                kind: BoundaryKind::Spatial,
                target: Arc::new(|_| 0.0),
            },
            BoundaryOp {
                name: "u(pi,t)=0".into(),
                field: 0,
                face: Face { axis: 0, hi_side: true },
                kind: BoundaryKind::Spatial,
                target: Arc::new(|_| 0.0),
            },
            BoundaryOp {
                name: "u(x,0)=u0".into(),
                field: 0,
                face: Face { axis: 1, hi_side: false },
                kind: BoundaryKind::Initial,
                target: initial_profile,
            },
        ],
        exact: Some(exact),
        data_sites: vec![DataSite::None],
        field_offsets: vec![0.0],
        flux: Some(gradient_flux()),
    })
}

/// Poisson u″ = f on [0, 1] with the manufactured solution u* = sin(kx),
/// f = −k²·sin(kx), Dirichlet ends from u*.
pub fn poisson1d_spec(k: f64) -> Result<ProblemSpec> {
    let exact: ExactFn = Arc::new(move |t: &mut TapeGraph, inputs: &[NodeId]| {
        let kx = t.scale(inputs[0], k);
        vec![t.sin(kx)]
    });

    let residual: ResidualFn = Arc::new(move |t: &mut TapeGraph, fields: &[NodeId], inputs: &[NodeId]| {
        let u = fields[0];
        let ux = t.deriv(u, 0)?;
        let uxx = t.deriv(ux, 0)?;
        let kx = t.scale(inputs[0], k);
        let s = t.sin(kx);
        let f = t.scale(s, -k * k);
        Ok(t.sub(uxx, f))
    });

    Ok(ProblemSpec {
        name: "poisson1d".into(),
        domain: Rect::new(vec![0.0], vec![1.0])?,
        n_fields: 1,
        max_deriv_order: 2,
        residual,
        boundary_ops: vec![
            BoundaryOp {
                name: "u(0)".into(),
                field: 0,
                face: Face { axis: 0, hi_side: false },
                kind: BoundaryKind::Spatial,
                target: Arc::new(move |_| 0.0),
            },
            BoundaryOp {
                name: "u(1)".into(),
                field: 0,
                face: Face { axis: 0, hi_side: true },
                kind: BoundaryKind::Spatial,
                target: Arc::new(move |_| k.sin()),
            },
        ],
        exact: Some(exact),
        data_sites: vec![DataSite::None],
        field_offsets: vec![0.0],
        flux: Some(gradient_flux()),
    })
}

fn heat_exact_fields(t: &mut TapeGraph, inputs: &[NodeId]) -> Vec<NodeId> {
    // T = 20 e^{-0.1 y}, K = 20 + e^{0.1 y} sin(0.5 x)
    let (x, y) = (inputs[0], inputs[1]);
    let gy = t.scale(y, -0.1);
    let ey = t.exp(gy);
    let temp = t.scale(ey, 20.0);
    let py = t.scale(y, 0.1);
    let epy = t.exp(py);
    let hx = t.scale(x, 0.5);
    let sx = t.sin(hx);
    let prod = t.mul(epy, sx);
    let cond = t.add_const(prod, 20.0);
    vec![temp, cond]
}

fn div_k_grad(
    t: &mut TapeGraph,
    temp: NodeId,
    cond: NodeId,
) -> Result<NodeId> {
    // ∂x(K T_x) + ∂y(K T_y)
    let tx = t.deriv(temp, 0)?;
    let ty = t.deriv(temp, 1)?;
    let fx = t.mul(cond, tx);
    let fy = t.mul(cond, ty);
    let dfx = t.deriv(fx, 0)?;
    let dfy = t.deriv(fy, 1)?;
    Ok(t.add(dfx, dfy))
}

/// Steady heat conduction with unknown variable conductivity (inverse):
/// ∂x(K·T_x) + ∂y(K·T_y) = f with two unknown fields (T̂, K̂). Temperature
/// data is available in the interior, conductivity data on the boundary
/// only; f is derived by exact differentiation of the closed forms rather
/// than hand algebra, so self-consistency is testable.
pub fn heat_conduction_spec(domain: Option<Rect>) -> Result<ProblemSpec> {
    let domain = match domain {
        Some(d) => {
            if d.dim() != 2 {
                return Err(Error::ShapeMismatch(format!(
                    "heat conduction needs a 2d domain, got dim {}",
                    d.dim()
                )));
            }
            d
        }
        None => Rect::new(vec![0.0, 0.0], vec![2.0 * PI, 2.0])?,
    };

    let exact: ExactFn = Arc::new(heat_exact_fields);

    let residual: ResidualFn = Arc::new(|t: &mut TapeGraph, fields: &[NodeId], inputs: &[NodeId]| {
        let lhs = div_k_grad(t, fields[0], fields[1])?;
        let ex = heat_exact_fields(t, inputs);
        let f = div_k_grad(t, ex[0], ex[1])?;
        Ok(t.sub(lhs, f))
    });

    let flux: FluxFn = Arc::new(|t: &mut TapeGraph, fields: &[NodeId], normal: &[f64]| {
        // K ∇T · n
        let (temp, cond) = (fields[0], fields[1]);
        let mut terms = Vec::new();
        for (axis, &n) in normal.iter().enumerate() {
            if n != 0.0 {
                let dt = t.deriv(temp, axis)?;
                let kdt = t.mul(cond, dt);
                terms.push(t.scale(kdt, n));
            }
        }
        Ok(t.sum(&terms))
    });

    let temp_target: TargetFn = Arc::new(|p: &[f64]| 20.0 * (-0.1 * p[1]).exp());
    let cond_target: TargetFn = Arc::new(|p: &[f64]| 20.0 + (0.1 * p[1]).exp() * (0.5 * p[0]).sin());

    let mut boundary_ops = Vec::new();
    for face in all_faces(2) {
        boundary_ops.push(BoundaryOp {
            name: format!("T dirichlet axis{} {}", face.axis, if face.hi_side { "hi" } else { "lo" }),
            field: 0,
            face,
            kind: BoundaryKind::Spatial,
            target: temp_target.clone(),
        });
        boundary_ops.push(BoundaryOp {
            name: format!("K dirichlet axis{} {}", face.axis, if face.hi_side { "hi" } else { "lo" }),
            field: 1,
            face,
            kind: BoundaryKind::Spatial,
            target: cond_target.clone(),
        });
    }

    Ok(ProblemSpec {
        name: "heat_conduction".into(),
        domain,
        n_fields: 2,
        max_deriv_order: 2,
        residual,
        boundary_ops,
        exact: Some(exact),
        data_sites: vec![DataSite::Interior, DataSite::Boundary],
        field_offsets: vec![20.0, 20.0],
        flux: Some(flux),
    })
}

/// Look up a built-in problem by name.
pub fn problem_by_name(name: &str, nu: f64, k: f64, domain: Option<Rect>) -> Result<ProblemSpec> {
    match name {
        "bl_ode" => bl_ode_spec(nu),
        "diffusion_reaction" => diffusion_reaction_spec(),
        "poisson1d" => poisson1d_spec(k),
        "heat_conduction" => heat_conduction_spec(domain),
        other => Err(Error::Config {
            path: "problem".into(),
            msg: format!("unknown problem `{other}`"),
        }),
    }
}
