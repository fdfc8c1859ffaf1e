//! Combinatorial exterior calculus on graphs: cochains on nodes, edges and
//! triangles, the gradient / curl / divergence operators that connect them,
//! Laplacians built from those operators, and the learning tasks layered on
//! top (diffusion-rate fitting, nonlinear conservative flux models,
//! finite-difference stencils, moving-least-squares polynomial lifts).
//!
//! Storage convention: every k-clique is kept once in canonical ascending
//! order (i<j, i<j<k); access under a reversed or permuted index returns
//! the value with the permutation's sign.
//!
//! Sign convention: `div_adj` is the nodewise sum Σ_j ψ_{ij}. Under the
//! unweighted inner products this is the *negated* adjoint of `grad0`
//! (⟨grad φ, ψ⟩_E = −⟨φ, div_adj ψ⟩_V, tested below), so the composition
//! `laplacian0 = div_adj ∘ grad0` equals −(D − A)φ — negative
//! semidefinite, which is what makes `x + α·laplacian0(x)` a diffusion
//! step. The edge-space Hodge Laplacian uses the true adjoints
//! (B₀B₀ᵀ + B₁ᵀB₁) so its nullity counts independent cycles.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Mat};
use crate::network::{adam_step, AdamState, Mlp};
use crate::tape::{NodeId, TapeGraph, Workspace};

#[derive(Debug, Clone)]
pub struct OrientedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
    index: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

impl OrientedGraph {
    pub fn new(n: usize, edges: &[(usize, usize)], weights: Option<Vec<f64>>) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} weights for {} edges",
                    w.len(),
                    edges.len()
                )));
            }
        }
        let mut canonical = Vec::with_capacity(edges.len());
        let mut index = HashMap::new();
        let mut adjacency = vec![Vec::new(); n];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) exceeds node count {n}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if index.insert((i, j), k).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            canonical.push((i, j));
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nb in adjacency.iter_mut() {
            nb.sort_unstable();
        }
        Ok(OrientedGraph { n, edges: canonical, weights, index, adjacency })
    }

    /// Parse an edge-list: one `i j [weight]` per line, 0-based indices;
    /// blank lines and `#` comments ignored. Node count is the largest
    /// index seen plus one.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut any_weight = false;
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(Error::InvalidGraph(format!(
                    "line {}: expected 'i j [weight]', got {line:?}",
                    lineno + 1
                )));
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::InvalidGraph(format!("line {}: bad node index {s:?}", lineno + 1))
                })
            };
            let (i, j) = (parse_idx(fields[0])?, parse_idx(fields[1])?);
            let w = match fields.get(2) {
                Some(s) => {
                    any_weight = true;
                    s.parse::<f64>().map_err(|_| {
                        Error::InvalidGraph(format!("line {}: bad weight {s:?}", lineno + 1))
                    })?
                }
                None => 1.0,
            };
            n = n.max(i + 1).max(j + 1);
            edges.push((i, j));
            weights.push(w);
        }
        OrientedGraph::new(n, &edges, any_weight.then_some(weights))
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weight(&self, e: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[e])
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.index.get(&key).copied()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone)]
pub struct CliqueComplex {
    pub graph: OrientedGraph,
    pub triangles: Vec<(usize, usize, usize)>,
}

/// Enumerate all triangles of the graph, once each in ascending order.
pub fn build_complex(graph: &OrientedGraph) -> CliqueComplex {
    let mut triangles = Vec::new();
    for &(i, j) in graph.edges() {
        // Common neighbors above j close each triangle exactly once.
        for &k in graph.neighbors(j) {
            if k > j && graph.edge_index(i, k).is_some() {
                triangles.push((i, j, k));
            }
        }
    }
    triangles.sort_unstable();
    CliqueComplex { graph: graph.clone(), triangles }
}

/// A k-cochain: one value per canonical k-clique, skew-symmetric under
/// index permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain {
    pub degree: u8,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn node(&self, i: usize) -> f64 {
        assert_eq!(self.degree, 0);
        self.values[i]
    }

    /// Edge value with skew access: `edge(g, j, i) == -edge(g, i, j)`.
    pub fn edge(&self, g: &OrientedGraph, i: usize, j: usize) -> Result<f64> {
        assert_eq!(self.degree, 1);
        let e = g
            .edge_index(i, j)
            .ok_or_else(|| Error::InvalidGraph(format!("no edge ({i}, {j})")))?;
        Ok(if i < j { self.values[e] } else { -self.values[e] })
    }

    /// Triangle value with the permutation's sign.
    pub fn triangle(&self, c: &CliqueComplex, i: usize, j: usize, k: usize) -> Result<f64> {
        assert_eq!(self.degree, 2);
        let mut sorted = [i, j, k];
        sorted.sort_unstable();
        let t = c
            .triangles
            .binary_search(&(sorted[0], sorted[1], sorted[2]))
            .map_err(|_| Error::InvalidGraph(format!("no triangle ({i}, {j}, {k})")))?;
        let sign = permutation_sign(&[i, j, k]);
        Ok(sign * self.values[t])
    }
}

fn permutation_sign(idx: &[usize; 3]) -> f64 {
    let mut inversions = 0;
    for a in 0..3 {
        for b in a + 1..3 {
            if idx[a] > idx[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// (grad φ)_{ij} = φ_j − φ_i on each canonical edge.
pub fn grad0(g: &OrientedGraph, phi: &[f64]) -> Result<Cochain> {
    if phi.len() != g.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "grad0: {} node values for {} nodes",
            phi.len(),
            g.n_nodes()
        )));
    }
    let values = g.edges().iter().map(|&(i, j)| phi[j] - phi[i]).collect();
    Ok(Cochain { degree: 1, values })
}

/// (curl ψ)_{ijk} = ψ_{ij} + ψ_{jk} + ψ_{ki} per canonical triangle.
pub fn curl1(c: &CliqueComplex, psi: &Cochain) -> Result<Cochain> {
    if psi.values.len() != c.graph.n_edges() {
        return Err(Error::ShapeMismatch(format!(
            "curl1: {} edge values for {} edges",
            psi.values.len(),
            c.graph.n_edges()
        )));
    }
    let mut values = Vec::with_capacity(c.triangles.len());
    for &(i, j, k) in &c.triangles {
        values.push(
            psi.edge(&c.graph, i, j)? + psi.edge(&c.graph, j, k)? + psi.edge(&c.graph, k, i)?,
        );
    }
    Ok(Cochain { degree: 2, values })
}

/// (grad* ψ)_i = Σ_{j∼i} ψ_{ij}, the paper-convention divergence. Its edge
/// contributions telescope: summing over all nodes gives exactly zero.
pub fn div_adj(g: &OrientedGraph, psi: &Cochain) -> Result<Cochain> {
    if psi.values.len() != g.n_edges() {
        return Err(Error::ShapeMismatch(format!(
            "div_adj: {} edge values for {} edges",
            psi.values.len(),
            g.n_edges()
        )));
    }
    let mut values = vec![0.0; g.n_nodes()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        values[i] += psi.values[e]; // ψ_{ij}
        values[j] -= psi.values[e]; // ψ_{ji}
    }
    Ok(Cochain { degree: 0, values })
}

/// div_adj ∘ grad0; equals −(D − A)φ elementwise.
pub fn laplacian0(g: &OrientedGraph, phi: &[f64]) -> Result<Cochain> {
    div_adj(g, &grad0(g, phi)?)
}

/// L = D − A, using edge weights when present.
pub fn graph_laplacian_matrix(g: &OrientedGraph) -> Mat {
    let n = g.n_nodes();
    let mut l = Mat::zeros(n, n);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let w = g.weight(e);
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// Gradient incidence B₀ (edges × nodes): row e of (B₀φ) is φ_j − φ_i.
pub fn gradient_incidence(g: &OrientedGraph) -> Mat {
    let mut b = Mat::zeros(g.n_edges(), g.n_nodes());
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        b[(e, i)] = -1.0;
        b[(e, j)] = 1.0;
    }
    b
}

/// Curl incidence B₁ (triangles × edges) matching [`curl1`].
pub fn curl_incidence(c: &CliqueComplex) -> Mat {
    let mut b = Mat::zeros(c.triangles.len(), c.graph.n_edges());
    for (t, &(i, j, k)) in c.triangles.iter().enumerate() {
        b[(t, c.graph.edge_index(i, j).unwrap())] = 1.0;
        b[(t, c.graph.edge_index(j, k).unwrap())] = 1.0;
        // ψ_{ki} = −ψ_{ik} on the canonical edge (i, k).
        b[(t, c.graph.edge_index(i, k).unwrap())] = -1.0;
    }
    b
}

/// Edge-space Hodge Laplacian B₀B₀ᵀ + B₁ᵀB₁ (true unweighted adjoints, so
/// the nullity equals the number of independent cycles not filled by a
/// triangle).
pub fn hodge1_matrix(c: &CliqueComplex) -> Mat {
    let b0 = gradient_incidence(&c.graph);
    let b1 = curl_incidence(c);
    let mut l = b0.matmul(&b0.transpose()).unwrap();
    let upper = b1.transpose().matmul(&b1).unwrap();
    for (lv, uv) in l.data.iter_mut().zip(&upper.data) {
        *lv += uv;
    }
    l
}

pub fn hodge_laplacian1(c: &CliqueComplex, psi: &Cochain) -> Result<Cochain> {
    if psi.values.len() != c.graph.n_edges() {
        return Err(Error::ShapeMismatch(format!(
            "hodge_laplacian1: {} edge values for {} edges",
            psi.values.len(),
            c.graph.n_edges()
        )));
    }
    Ok(Cochain { degree: 1, values: hodge1_matrix(c).matvec(&psi.values)? })
}

/// Explicit Euler diffusion update x + α·laplacian0(x); conserves Σx.
pub fn diffusion_step(g: &OrientedGraph, x: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let lap = laplacian0(g, x)?;
    Ok(x.iter().zip(&lap.values).map(|(xi, li)| xi + alpha * li).collect())
}

/// Closed-form least-squares diffusion rate from a snapshot trajectory:
/// minimizes Σₙ‖x^{n+1} − x^n − α·laplacian0(x^n)‖² over the scalar α.
pub fn fit_diffusion(g: &OrientedGraph, trajectory: &[Vec<f64>]) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::EmptySet("trajectory needs at least 2 snapshots".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for pair in trajectory.windows(2) {
        let lap = laplacian0(g, &pair[0])?;
        for ((l, x0), x1) in lap.values.iter().zip(&pair[0]).zip(&pair[1]) {
            num += l * (x1 - x0);
            den += l * l;
        }
    }
    if den <= 1e-28 {
        return Err(Error::Unidentifiable(
            "trajectory has zero Laplacian; diffusion rate unidentifiable".into(),
        ));
    }
    Ok(num / den)
}

/// Compiled scalar map g ↦ N(g) with value, input derivative, and
/// parameter gradient from one tape pass per edge.
struct FluxProgram {
    tape: TapeGraph,
    out: NodeId,
    params: Vec<f64>,
}

impl FluxProgram {
    fn new(net: &Mlp) -> Result<Self> {
        let mut tape = TapeGraph::new(1, 1);
        let g = tape.input(Some(0));
        let out = net.emit(&mut tape, 0, &[g])?[0];
        Ok(FluxProgram { tape, out, params: net.flat_params() })
    }

    fn workspace(&self) -> Workspace {
        Workspace::new(&self.tape)
    }

    fn value_and_slope(&self, g: f64, ws: &mut Workspace) -> Result<(f64, f64)> {
        self.tape.forward(&self.params, &[g], ws)?;
        Ok((self.tape.value(ws, self.out), self.tape.derivative(ws, self.out, &[1])?))
    }

    /// ∂N(g)/∂θ into `grads` (forward must already have run for this g).
    fn param_grad(&self, ws: &mut Workspace, grads: &mut [f64]) {
        self.tape.backward(ws, self.out, grads);
    }
}

fn edge_flux(
    program: Option<&FluxProgram>,
    ws: Option<&mut Workspace>,
    grads: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    match (program, ws) {
        (Some(p), Some(ws)) => {
            let mut vals = Vec::with_capacity(grads.len());
            let mut slopes = Vec::with_capacity(grads.len());
            for &g in grads {
                let (v, s) = p.value_and_slope(g, ws)?;
                vals.push(v);
                slopes.push(s);
            }
            Ok((vals, slopes))
        }
        _ => Ok((vec![0.0; grads.len()], vec![0.0; grads.len()])),
    }
}

/// Residual of the conservation law: laplacian0(u) + div_adj(N(grad u)) − f₀.
fn flux_residual(
    g: &OrientedGraph,
    u: &[f64],
    f0: &[f64],
    program: Option<&FluxProgram>,
    ws: Option<&mut Workspace>,
) -> Result<Vec<f64>> {
    let gu = grad0(g, u)?;
    let (nvals, _) = edge_flux(program, ws, &gu.values)?;
    let total = Cochain {
        degree: 1,
        values: gu.values.iter().zip(&nvals).map(|(a, b)| a + b).collect(),
    };
    let div = div_adj(g, &total)?;
    Ok(div.values.iter().zip(f0).map(|(d, f)| d - f).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve grad*grad u + grad* N[grad u] = f₀ by Newton iteration with the
/// gauge u(0) = 0. Requires a connected graph and Σf₀ = 0 (the operator's
/// image sums to zero, so an incompatible source has no solution).
pub fn nonlinear_flux_solve(
    g: &OrientedGraph,
    f0: &[f64],
    flux_net: Option<&Mlp>,
) -> Result<Vec<f64>> {
    if f0.len() != g.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{} source values for {} nodes",
            f0.len(),
            g.n_nodes()
        )));
    }
    if !g.is_connected() {
        return Err(Error::InvalidGraph("flux solve requires a connected graph".into()));
    }
    let total: f64 = f0.iter().sum();
    let scale = norm(f0).max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(Error::Incompatible(total));
    }

    let program = flux_net.map(FluxProgram::new).transpose()?;
    let mut ws = program.as_ref().map(|p| p.workspace());
    let n = g.n_nodes();
    let mut u = vec![0.0; n];
    let mut residual = flux_residual(g, &u, f0, program.as_ref(), ws.as_mut())?;
    let tol = 1e-10 * scale.max(1.0);

    for _iter in 0..50 {
        if norm(&residual) <= tol {
            return Ok(u);
        }
        // J = −BᵀB − Bᵀ diag(N'(Bu)) B, reduced by the gauge (drop row and
        // column 0; the dropped equation is the compatibility identity).
        let gu = grad0(g, &u)?;
        let (_, slopes) = edge_flux(program.as_ref(), ws.as_mut(), &gu.values)?;
        let mut jac = Mat::zeros(n - 1, n - 1);
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let w = 1.0 + slopes[e];
            for (r, rsign) in [(i, 1.0), (j, -1.0)] {
                if r == 0 {
                    continue;
                }
                for (c, csign) in [(i, -1.0), (j, 1.0)] {
                    if c == 0 {
                        continue;
                    }
                    // row r of −Bᵀ times w times column c of B
                    jac[(r - 1, c - 1)] += rsign * w * csign;
                }
            }
        }
        let rhs: Vec<f64> = residual[1..].iter().map(|r| -r).collect();
        let delta = lu_solve(&jac, &rhs)?;

        let base = norm(&residual);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for (t, d) in trial[1..].iter_mut().zip(&delta) {
                *t += step * d;
            }
            let trial_res = flux_residual(g, &trial, f0, program.as_ref(), ws.as_mut())?;
            if norm(&trial_res) < base {
                u = trial;
                residual = trial_res;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged(_iter + 1));
        }
    }
    if norm(&residual) <= tol {
        Ok(u)
    } else {
        Err(Error::NewtonDiverged(50))
    }
}

/// Data-misfit of the flux model over (u, f₀) pairs:
/// Σ ‖laplacian0(u) + div_adj(N(grad u)) − f₀‖².
pub fn flux_model_loss(
    g: &OrientedGraph,
    pairs: &[(Vec<f64>, Vec<f64>)],
    net: &Mlp,
) -> Result<f64> {
    let program = FluxProgram::new(net)?;
    let mut ws = program.workspace();
    let mut loss = 0.0;
    for (u, f0) in pairs {
        let r = flux_residual(g, u, f0, Some(&program), Some(&mut ws))?;
        loss += r.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(loss)
}

/// Fit the nonlinear edge-flux network by gradient descent on
/// [`flux_model_loss`]. The conservation structure (outermost divergence)
/// holds for every iterate by construction. Returns the final loss.
pub fn fit_flux_model(
    g: &OrientedGraph,
    pairs: &[(Vec<f64>, Vec<f64>)],
    net: &mut Mlp,
    epochs: usize,
    lr: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySet("flux training pairs".into()));
    }
    let mut program = FluxProgram::new(net)?;
    let mut ws = program.workspace();
    let n_theta = program.params.len();
    let mut adam = AdamState::new(n_theta, lr);
    let mut grad = vec![0.0; n_theta];
    let mut edge_grad = vec![0.0; n_theta];
    let mut loss = 0.0;
    for _ in 0..epochs {
        grad.fill(0.0);
        loss = 0.0;
        for (u, f0) in pairs {
            let r = flux_residual(g, u, f0, Some(&program), Some(&mut ws))?;
            loss += r.iter().map(|v| v * v).sum::<f64>();
            // ∂loss/∂N_e = −2(Br)_e = −2(r_j − r_i); chain through the net.
            let gu = grad0(g, u)?;
            for (e, &(i, j)) in g.edges().iter().enumerate() {
                let sensitivity = -2.0 * (r[j] - r[i]);
                if sensitivity == 0.0 {
                    continue;
                }
                program.value_and_slope(gu.values[e], &mut ws)?;
                program.param_grad(&mut ws, &mut edge_grad);
                for (gv, ev) in grad.iter_mut().zip(&edge_grad) {
                    *gv += sensitivity * ev;
                }
            }
        }
        adam_step(&mut program.params, &grad, &mut adam)?;
    }
    net.read_flat(&program.params);
    Ok(loss)
}

/// Apply per-node stencil coefficients over the given neighborhoods
/// (each listing the nodes a stencil touches, self included).
pub fn stencil_apply(
    stencils: &[Vec<f64>],
    neighborhoods: &[Vec<usize>],
    x: &[f64],
) -> Result<Vec<f64>> {
    if stencils.len() != neighborhoods.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} stencils for {} neighborhoods",
            stencils.len(),
            neighborhoods.len()
        )));
    }
    let mut out = Vec::with_capacity(stencils.len());
    for (theta, nbhd) in stencils.iter().zip(neighborhoods) {
        if theta.len() != nbhd.len() {
            return Err(Error::ShapeMismatch(format!(
                "stencil size {} vs neighborhood size {}",
                theta.len(),
                nbhd.len()
            )));
        }
        out.push(theta.iter().zip(nbhd).map(|(t, &j)| t * x[j]).sum());
    }
    Ok(out)
}

/// Least-squares stencil coefficients from (x, Lx) samples. Per-node by
/// default; `shared` fits one stencil used at every node, which requires
/// all neighborhoods to have equal size.
pub fn fit_stencil(
    samples: &[(Vec<f64>, Vec<f64>)],
    neighborhoods: &[Vec<usize>],
    shared: bool,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::EmptySet("stencil samples".into()));
    }
    if shared {
        let width = neighborhoods
            .first()
            .ok_or_else(|| Error::EmptySet("neighborhoods".into()))?
            .len();
        if neighborhoods.iter().any(|nb| nb.len() != width) {
            return Err(Error::ShapeMismatch(
                "shared stencil requires equal neighborhood sizes".into(),
            ));
        }
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (x, lx) in samples {
            for (node, nbhd) in neighborhoods.iter().enumerate() {
                rows.push(nbhd.iter().map(|&j| x[j]).collect());
                rhs.push(lx[node]);
            }
        }
        let theta = crate::linalg::least_squares_min_norm(&Mat::from_rows(&rows)?, &rhs, 1e-10)?;
        return Ok(vec![theta; neighborhoods.len()]);
    }
    let mut out = Vec::with_capacity(neighborhoods.len());
    for (node, nbhd) in neighborhoods.iter().enumerate() {
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|(x, _)| nbhd.iter().map(|&j| x[j]).collect())
            .collect();
        let rhs: Vec<f64> = samples.iter().map(|(_, lx)| lx[node]).collect();
        out.push(crate::linalg::least_squares_min_norm(&Mat::from_rows(&rows)?, &rhs, 1e-10)?);
    }
    Ok(out)
}

/// Quartic bump weight: (1 − (r/ε)²)² inside the ε-ball, 0 at and beyond it.
pub fn gmls_weight(r: f64, eps: f64) -> f64 {
    if r >= eps {
        0.0
    } else {
        let s = 1.0 - (r / eps) * (r / eps);
        s * s
    }
}

/// Monomial basis (x − x_c)^α for all |α| ≤ m (graded ordering shared with
/// the jet coefficient layout).
fn poly_basis(dx: &[f64], indices: &[Vec<u8>]) -> Vec<f64> {
    indices
        .iter()
        .map(|alpha| {
            alpha
                .iter()
                .zip(dx)
                .map(|(&a, &d)| d.powi(a as i32))
                .product()
        })
        .collect()
}

/// Moving-least-squares polynomial lift: for each center, the coefficients
/// of the degree-≤m polynomial that best fits neighboring point values in
/// the kernel-weighted least-squares sense. Coefficient order matches
/// `JetSpace::indices()` for the point dimension.
pub fn gmls_lift(
    centers: &[Vec<f64>],
    points: &[Vec<f64>],
    values: &[f64],
    order: usize,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    if points.len() != values.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points vs {} values",
            points.len(),
            values.len()
        )));
    }
    let dim = centers.first().map_or(0, |c| c.len());
    let space = crate::jet::JetSpace::new(dim, order);
    let n_basis = space.n_coeffs();

    let mut out = Vec::with_capacity(centers.len());
    for center in centers {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (p, &v) in points.iter().zip(values) {
            let r = p
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let w = gmls_weight(r, eps);
            if w == 0.0 {
                continue;
            }
            let dx: Vec<f64> = p.iter().zip(center).map(|(a, b)| a - b).collect();
            let sw = w.sqrt();
            rows.push(poly_basis(&dx, space.indices()).iter().map(|b| b * sw).collect());
            rhs.push(v * sw);
        }
        if rows.len() < n_basis {
            return Err(Error::RankDeficient { rank: rows.len(), cols: n_basis });
        }
        out.push(crate::linalg::least_squares_min_norm(&Mat::from_rows(&rows)?, &rhs, 1e-12)?);
    }
    Ok(out)
}
