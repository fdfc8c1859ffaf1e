//! Reference graph neural network layers: spectral convolution through the
//! Laplacian eigenbasis, message passing with sum aggregation, and
//! multi-head graph attention. Dense linear algebra throughout — these are
//! semantics references for small graphs, not a training framework.

use crate::error::{Error, Result};
use crate::graph::OrientedGraph;
use crate::linalg::{jacobi_eigen, Mat};
use crate::network::Mlp;

/// Eigendecomposition L = U Λ Uᵀ of a symmetric (Laplacian) matrix:
/// orthonormal columns of U, ascending eigenvalues.
pub fn laplacian_eigendecomp(l: &Mat) -> Result<(Mat, Vec<f64>)> {
    jacobi_eigen(l)
}

/// Symmetric-normalized Laplacian I − D^{-1/2} A D^{-1/2}.
pub fn normalized_laplacian(g: &OrientedGraph) -> Mat {
    let n = g.n_nodes();
    let mut degree = vec![0.0; n];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let w = g.weight(e);
        degree[i] += w;
        degree[j] += w;
    }
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        if degree[i] > 0.0 {
            l[(i, i)] = 1.0;
        }
    }
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let v = g.weight(e) * inv_sqrt[i] * inv_sqrt[j];
        l[(i, j)] -= v;
        l[(j, i)] -= v;
    }
    l
}

/// Graph Fourier transform x̂ = Uᵀx.
pub fn graph_fourier(u: &Mat, x: &[f64]) -> Result<Vec<f64>> {
    u.transpose().matvec(x)
}

/// Inverse transform x = U x̂.
pub fn inverse_graph_fourier(u: &Mat, xhat: &[f64]) -> Result<Vec<f64>> {
    u.matvec(xhat)
}

/// Spectral convolution X' = U((UᵀX) ⊙ (UᵀW)) with elementwise ⊙.
pub fn spectral_conv(u: &Mat, x: &Mat, w: &Mat) -> Result<Mat> {
    if x.rows != u.rows || w.rows != u.rows || w.cols != x.cols {
        return Err(Error::ShapeMismatch(format!(
            "spectral_conv: U {}x{}, X {}x{}, W {}x{}",
            u.rows, u.cols, x.rows, x.cols, w.rows, w.cols
        )));
    }
    let ut = u.transpose();
    let xs = ut.matmul(x)?;
    let ws = ut.matmul(w)?;
    let mut prod = xs.clone();
    for (p, wv) in prod.data.iter_mut().zip(&ws.data) {
        *p *= wv;
    }
    u.matmul(&prod)
}

fn feature_row(h: &Mat, i: usize) -> &[f64] {
    &h.data[i * h.cols..(i + 1) * h.cols]
}

/// Sum-aggregated messages m_i = Σ_{j∈N(i)} M(h_i, h_j, e_{ij}); the
/// message network takes the concatenation [h_i, h_j, e_{ij}]. Neighbors
/// are visited in ascending node order, so the sum is deterministic.
pub fn mpnn_message(
    g: &OrientedGraph,
    h: &Mat,
    edge_features: Option<&[Vec<f64>]>,
    m_net: &Mlp,
) -> Result<Mat> {
    if h.rows != g.n_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            h.rows,
            g.n_nodes()
        )));
    }
    let e_dim = edge_features.map_or(0, |e| e.first().map_or(0, |v| v.len()));
    let out_dim = m_net.output_dim();
    let mut m = Mat::zeros(h.rows, out_dim);
    for i in 0..g.n_nodes() {
        for &j in g.neighbors(i) {
            let mut input = Vec::with_capacity(2 * h.cols + e_dim);
            input.extend_from_slice(feature_row(h, i));
            input.extend_from_slice(feature_row(h, j));
            if let Some(ef) = edge_features {
                let e = g.edge_index(i, j).unwrap();
                input.extend_from_slice(&ef[e]);
            }
            let msg = m_net.forward(&input)?;
            for (k, v) in msg.iter().enumerate() {
                m[(i, k)] += v;
            }
        }
    }
    Ok(m)
}

/// Nodewise update h'_i = U(h_i, m_i) on the concatenated input.
pub fn mpnn_update(h: &Mat, m: &Mat, u_net: &Mlp) -> Result<Mat> {
    if h.rows != m.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} message rows",
            h.rows, m.rows
        )));
    }
    let out_dim = u_net.output_dim();
    let mut next = Mat::zeros(h.rows, out_dim);
    for i in 0..h.rows {
        let mut input = Vec::with_capacity(h.cols + m.cols);
        input.extend_from_slice(feature_row(h, i));
        input.extend_from_slice(feature_row(m, i));
        let v = u_net.forward(&input)?;
        next.data[i * out_dim..(i + 1) * out_dim].copy_from_slice(&v);
    }
    Ok(next)
}

/// Permutation-invariant graph readout: feature sum over nodes, taken in
/// canonical node order so equal multisets give bitwise-equal results.
pub fn readout(h: &Mat) -> Result<Vec<f64>> {
    if h.rows == 0 {
        return Err(Error::EmptySet("readout over an empty graph".into()));
    }
    let mut out = vec![0.0; h.cols];
    for i in 0..h.rows {
        for (o, v) in out.iter_mut().zip(feature_row(h, i)) {
            *o += v;
        }
    }
    Ok(out)
}

/// One attention head: projection W (F × F') and attention vector a of
/// length 2F' scoring the pair [Wh_i || Wh_j].
#[derive(Debug, Clone)]
pub struct AttentionHead {
    pub w: Mat,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadCombine {
    /// Concatenate head outputs (hidden layers).
    Concat,
    /// Average head outputs (final layer).
    Average,
}

#[derive(Debug, Clone)]
pub struct GatParams {
    pub heads: Vec<AttentionHead>,
    pub combine: HeadCombine,
    /// Attend over the node itself too; keeps isolated nodes well-defined.
    pub self_loops: bool,
    /// Apply tanh to each head output; linear otherwise.
    pub tanh_activation: bool,
}

fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn attention_neighborhood(g: &OrientedGraph, i: usize, self_loops: bool) -> Result<Vec<usize>> {
    let mut nbhd: Vec<usize> = g.neighbors(i).to_vec();
    if self_loops {
        nbhd.push(i);
        nbhd.sort_unstable();
    }
    if nbhd.is_empty() {
        return Err(Error::InvalidGraph(format!(
            "node {i} has no neighbors and self-loops are disabled"
        )));
    }
    Ok(nbhd)
}

/// Softmax-normalized attention coefficients of one head: row i holds
/// α_{ij} over j in N(i), zero elsewhere. Logits are
/// LeakyReLU(aᵀ[Wh_i || Wh_j]), normalized with max-subtraction.
pub fn gat_attention(
    g: &OrientedGraph,
    h: &Mat,
    head: &AttentionHead,
    self_loops: bool,
) -> Result<Mat> {
    let fp = head.w.cols;
    if head.a.len() != 2 * fp {
        return Err(Error::ShapeMismatch(format!(
            "attention vector length {} vs 2×{fp}",
            head.a.len()
        )));
    }
    let projected = h.matmul(&head.w)?;
    let n = g.n_nodes();
    let mut alpha = Mat::zeros(n, n);
    for i in 0..n {
        let nbhd = attention_neighborhood(g, i, self_loops)?;
        let logits: Vec<f64> = nbhd
            .iter()
            .map(|&j| {
                let mut c = 0.0;
                for (k, &av) in head.a.iter().enumerate() {
                    c += av * if k < fp {
                        projected[(i, k)]
                    } else {
                        projected[(j, k - fp)]
                    };
                }
                leaky_relu(c)
            })
            .collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = logits.iter().map(|&c| (c - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (&j, e) in nbhd.iter().zip(&exps) {
            alpha[(i, j)] = e / z;
        }
    }
    Ok(alpha)
}

/// Multi-head GAT layer: per head σ(Σ_j α_{ij} W h_j), heads combined by
/// concatenation or averaging.
pub fn gat_layer(g: &OrientedGraph, h: &Mat, params: &GatParams) -> Result<Mat> {
    if params.heads.is_empty() {
        return Err(Error::EmptySet("attention heads".into()));
    }
    let fp = params.heads[0].w.cols;
    if params.heads.iter().any(|head| head.w.cols != fp) {
        return Err(Error::ShapeMismatch("heads disagree on output width".into()));
    }
    let n = g.n_nodes();
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let alpha = gat_attention(g, h, head, params.self_loops)?;
        let projected = h.matmul(&head.w)?;
        let mut out = alpha.matmul(&projected)?;
        if params.tanh_activation {
            for v in out.data.iter_mut() {
                *v = v.tanh();
            }
        }
        head_outputs.push(out);
    }
    match params.combine {
        HeadCombine::Concat => {
            let mut out = Mat::zeros(n, fp * head_outputs.len());
            for i in 0..n {
                for (k, ho) in head_outputs.iter().enumerate() {
                    for c in 0..fp {
                        out[(i, k * fp + c)] = ho[(i, c)];
                    }
                }
            }
            Ok(out)
        }
        HeadCombine::Average => {
            let mut out = Mat::zeros(n, fp);
            let k = head_outputs.len() as f64;
            for ho in &head_outputs {
                for (o, v) in out.data.iter_mut().zip(&ho.data) {
                    *o += v / k;
                }
            }
            Ok(out)
        }
    }
}
