//! Truncated multivariate Taylor ("jet") arithmetic.
//!
//! A jet stores the Taylor coefficients `c_α = ∂^α f / α!` of a scalar
//! function with respect to a small set of input variables, up to a fixed
//! total order (at most 3 in this crate). All coefficient bookkeeping is
//! precomputed in a [`JetSpace`]: the multi-index enumeration, the
//! convolution pairs used by products, and the coefficient shuffles used by
//! the derivative operator. Kernels work on flat `&[f64]` slices so callers
//! can keep jets in large contiguous buffers.

use std::collections::HashMap;

/// Maximum supported derivative order for input derivatives.
pub const MAX_ORDER: usize = 3;

/// Precomputed tables for jets of a fixed dimension and truncation order.
#[derive(Debug, Clone)]
pub struct JetSpace {
    dim: usize,
    order: usize,
    /// Multi-indices in graded lexicographic order; slot 0 is the zero index.
    indices: Vec<Vec<u8>>,
    index_of: HashMap<Vec<u8>, usize>,
    /// For each output slot γ, every pair (α, β) with α + β = γ.
    mul_pairs: Vec<Vec<(u32, u32)>>,
    /// Per axis, per output slot α: source slot of α + e_axis and the factor
    /// (α_axis + 1), or None when α + e_axis exceeds the truncation order.
    deriv: Vec<Vec<Option<(u32, f64)>>>,
    /// α! per slot.
    factorial: Vec<f64>,
    /// Slot of the unit index e_axis, per axis (empty when order == 0).
    axis_unit: Vec<usize>,
}

fn enumerate_indices(dim: usize, order: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::new();
    for total in 0..=order {
        let mut idx = vec![0u8; dim];
        fill(&mut out, &mut idx, 0, total as u8);
    }
    return out;

    fn fill(out: &mut Vec<Vec<u8>>, idx: &mut [u8], pos: usize, remaining: u8) {
        if idx.is_empty() {
            if remaining == 0 {
                out.push(Vec::new());
            }
            return;
        }
        if pos == idx.len() - 1 {
            idx[pos] = remaining;
            out.push(idx.to_vec());
            return;
        }
        for v in (0..=remaining).rev() {
            idx[pos] = v;
            fill(out, idx, pos + 1, remaining - v);
        }
        idx[pos] = 0;
    }
}

impl JetSpace {
    pub fn new(dim: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} > {MAX_ORDER}");
        let mut indices = enumerate_indices(dim, order);
        if dim == 0 {
            indices = vec![Vec::new()];
        }
        let index_of: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, idx)| (idx.clone(), i))
            .collect();
        let n = indices.len();

        let mut mul_pairs = vec![Vec::new(); n];
        for (ia, a) in indices.iter().enumerate() {
            for (ib, b) in indices.iter().enumerate() {
                let total: usize =
                    a.iter().map(|&v| v as usize).sum::<usize>() + b.iter().map(|&v| v as usize).sum::<usize>();
                if total > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let ig = index_of[&sum];
                mul_pairs[ig].push((ia as u32, ib as u32));
            }
        }

        let mut deriv = Vec::with_capacity(dim);
        for axis in 0..dim {
            let mut table = Vec::with_capacity(n);
            for idx in &indices {
                let mut src = idx.clone();
                src[axis] += 1;
                table.push(
                    index_of
                        .get(&src)
                        .map(|&s| (s as u32, (idx[axis] + 1) as f64)),
                );
            }
            deriv.push(table);
        }

        let factorial: Vec<f64> = indices
            .iter()
            .map(|idx| idx.iter().map(|&v| fact(v as usize)).product())
            .collect();

        let axis_unit: Vec<usize> = if order >= 1 {
            (0..dim)
                .map(|axis| {
                    let mut e = vec![0u8; dim];
                    e[axis] = 1;
                    index_of[&e]
                })
                .collect()
        } else {
            Vec::new()
        };

        Self {
            dim,
            order,
            indices,
            index_of,
            mul_pairs,
            deriv,
            factorial,
            axis_unit,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_coeffs(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<u8>] {
        &self.indices
    }

    pub fn slot(&self, idx: &[u8]) -> Option<usize> {
        self.index_of.get(idx).copied()
    }

    /// Slot of the first-order unit index along `axis`.
    pub fn unit_slot(&self, axis: usize) -> usize {
        self.axis_unit[axis]
    }

    /// α! for the multi-index at `slot`; converts a Taylor coefficient into a
    /// plain partial derivative.
    pub fn factorial(&self, slot: usize) -> f64 {
        self.factorial[slot]
    }

    /// out = a ⊛ b (truncated product).
    pub fn mul(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for (g, pairs) in self.mul_pairs.iter().enumerate() {
            let mut acc = 0.0;
            for &(ia, ib) in pairs {
                acc += a[ia as usize] * b[ib as usize];
            }
            out[g] = acc;
        }
    }

    /// Accumulate the product adjoints of c = a ⊛ b:
    /// `abar_α += cbar_γ · b_β` and `bbar_β += cbar_γ · a_α` over α + β = γ.
    pub fn mul_backward(&self, cbar: &[f64], a: &[f64], b: &[f64], abar: &mut [f64], bbar: &mut [f64]) {
        for (g, pairs) in self.mul_pairs.iter().enumerate() {
            let cg = cbar[g];
            if cg == 0.0 {
                continue;
            }
            for &(ia, ib) in pairs {
                abar[ia as usize] += cg * b[ib as usize];
                bbar[ib as usize] += cg * a[ia as usize];
            }
        }
    }

    /// Accumulate `abar_α += cbar_γ · w_β` over α + β = γ (one-sided version
    /// of [`Self::mul_backward`], used for unary chain rules with w = φ'(a)).
    pub fn corr(&self, cbar: &[f64], w: &[f64], abar: &mut [f64]) {
        for (g, pairs) in self.mul_pairs.iter().enumerate() {
            let cg = cbar[g];
            if cg == 0.0 {
                continue;
            }
            for &(ia, ib) in pairs {
                abar[ia as usize] += cg * w[ib as usize];
            }
        }
    }

    /// Composition with a scalar function: out = φ(a) in the truncated
    /// algebra. `derivs[k]` must hold φ^(k) evaluated at the value part of
    /// `a`, for k = 0..=order (order + 1 entries). Horner evaluation in the
    /// nilpotent part; `w` and `t` are scratch buffers of n_coeffs each.
    pub fn compose(&self, a: &[f64], derivs: &[f64], out: &mut [f64], w: &mut [f64], t: &mut [f64]) {
        let k_max = self.order.min(derivs.len() - 1);
        w.copy_from_slice(a);
        w[0] = 0.0;
        out.fill(0.0);
        out[0] = derivs[k_max] / fact(k_max);
        for k in (0..k_max).rev() {
            self.mul(out, w, t);
            out.copy_from_slice(t);
            out[0] += derivs[k] / fact(k);
        }
    }

    /// out = ∂_axis a as a jet (valid one order lower than `a`).
    pub fn deriv_jet(&self, a: &[f64], axis: usize, out: &mut [f64]) {
        for (slot, entry) in self.deriv[axis].iter().enumerate() {
            out[slot] = match entry {
                Some((src, factor)) => factor * a[*src as usize],
                None => 0.0,
            };
        }
    }

    /// Adjoint of [`Self::deriv_jet`]: `abar_{α+e} += (α_e + 1) · cbar_α`.
    pub fn deriv_backward(&self, cbar: &[f64], axis: usize, abar: &mut [f64]) {
        for (slot, entry) in self.deriv[axis].iter().enumerate() {
            if let Some((src, factor)) = entry {
                abar[*src as usize] += factor * cbar[slot];
            }
        }
    }
}

pub(crate) fn fact(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}
