//! Tangent-space geometry of the Wasserstein space in quantile coordinates.
//!
//! A tangent vector `g` at an atomless base `mu*` is stored as `g(F_*^{-1}(p_k))`
//! at the grid points. In these coordinates the log map is a difference of
//! quantile vectors, the exp map is a sum, and parallel transport between
//! tangent spaces leaves the stored values untouched.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::DistributionQ;
use crate::error::{Error, Result};
use crate::isotonic::max_decrease;

/// Decreases of `base + vals` up to this size (relative to the value scale)
/// are treated as rounding noise by [`exp_map`].
pub const LOG_IMAGE_TOL: f64 = 1e-12;

/// Tangent vector at an atomless base distribution, in quantile coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    base: Arc<DistributionQ>,
    vals: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Arc<DistributionQ>, vals: Vec<f64>) -> Result<Self> {
        base.require_atomless()?;
        if vals.len() != base.len() {
            return Err(Error::LengthMismatch(vals.len(), base.len()));
        }
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite tangent value at grid index {k}"
            )));
        }
        Ok(Self { base, vals })
    }

    /// The zero vector at `base`.
    pub fn zero(base: Arc<DistributionQ>) -> Result<Self> {
        let m = base.len();
        Self::new(base, vec![0.0; m])
    }

    /// Skips validation; callers guarantee an atomless base and finite values.
    pub(crate) fn from_parts(base: Arc<DistributionQ>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(base.len(), vals.len());
        Self { base, vals }
    }

    pub fn base(&self) -> &Arc<DistributionQ> {
        &self.base
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn into_vals(self) -> Vec<f64> {
        self.vals
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Same vector rescaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            base: Arc::clone(&self.base),
            vals: self.vals.iter().map(|v| c * v).collect(),
        }
    }

    /// Norm induced by [`inner_product`].
    pub fn norm(&self) -> f64 {
        self.base.grid().dot(&self.vals, &self.vals).sqrt()
    }

    /// True when `base + vals` is non-decreasing, i.e. the vector is a valid
    /// argument of [`exp_map`].
    pub fn in_log_image(&self) -> bool {
        log_image_violation(&self.base, &self.vals).is_none()
    }
}

/// Whether two base measures coincide (same allocation or equal values).
pub fn same_base(a: &Arc<DistributionQ>, b: &Arc<DistributionQ>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn check_base(a: &Arc<DistributionQ>, b: &Arc<DistributionQ>) -> Result<()> {
    if same_base(a, b) {
        Ok(())
    } else {
        Err(Error::IncompatibleBase)
    }
}

fn log_image_violation(base: &DistributionQ, vals: &[f64]) -> Option<(usize, f64)> {
    let q: Vec<f64> = base.qvals().iter().zip(vals).map(|(b, v)| b + v).collect();
    let (index, violation) = max_decrease(&q)?;
    let scale = q.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    (violation > LOG_IMAGE_TOL * scale).then_some((index, violation))
}

/// `Log_{base}(target)`: `vals[k] = target[k] - base[k]`.
pub fn log_map(base: &Arc<DistributionQ>, target: &DistributionQ) -> Result<TangentVector> {
    base.check_grid(target)?;
    base.require_atomless()?;
    let vals = target
        .qvals()
        .iter()
        .zip(base.qvals())
        .map(|(t, b)| t - b)
        .collect();
    Ok(TangentVector::from_parts(Arc::clone(base), vals))
}

/// `Exp_{base}(v)`: `qvals[k] = base[k] + vals[k]`.
///
/// Fails with [`Error::NotInLogImage`] if the sum is not non-decreasing; see
/// [`crate::d2d::boundary_projection`] for making a vector admissible.
pub fn exp_map(v: &TangentVector) -> Result<DistributionQ> {
    if let Some((index, violation)) = log_image_violation(&v.base, &v.vals) {
        return Err(Error::NotInLogImage { index, violation });
    }
    let q = v.base.qvals().iter().zip(&v.vals).map(|(b, g)| b + g).collect();
    DistributionQ::new(Arc::clone(v.base.grid()), q)
}

/// Point at time `t` on the geodesic from `base` to `target`.
pub fn geodesic_point(base: &DistributionQ, target: &DistributionQ, t: f64) -> Result<DistributionQ> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("geodesic time {t} outside [0, 1]")));
    }
    base.check_grid(target)?;
    base.require_atomless()?;
    let q = base
        .qvals()
        .iter()
        .zip(target.qvals())
        .map(|(b, x)| (1.0 - t) * b + t * x)
        .collect();
    DistributionQ::new(Arc::clone(base.grid()), q)
}

/// `<u, v>` in the tangent space at their common base.
pub fn inner_product(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    check_base(&u.base, &v.base)?;
    Ok(u.base.grid().dot(&u.vals, &v.vals))
}

/// Moves `v` to the tangent space at `dest`. The stored values are unchanged.
pub fn parallel_transport(v: &TangentVector, dest: &Arc<DistributionQ>) -> Result<TangentVector> {
    v.base.check_grid(dest)?;
    dest.require_atomless()?;
    Ok(TangentVector::from_parts(Arc::clone(dest), v.vals.clone()))
}

/// Finite-rank integral operator between tangent spaces,
/// `A g = sum_{j,k} c_jk <g, phi_j> psi_k`, with kernel
/// `beta(s, t) = sum_{j,k} c_jk phi_j(s) psi_k(t)`.
///
/// `phi_j` live at the input (predictor) base, `psi_k` at the output
/// (response) base, both in quantile coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorKernel {
    input_base: Arc<DistributionQ>,
    output_base: Arc<DistributionQ>,
    input_fns: Vec<Vec<f64>>,
    output_fns: Vec<Vec<f64>>,
    /// `coef[j][k]`, `j` over input functions, `k` over output functions.
    coef: Vec<Vec<f64>>,
}

impl OperatorKernel {
    pub fn new(
        input_base: Arc<DistributionQ>,
        output_base: Arc<DistributionQ>,
        input_fns: Vec<Vec<f64>>,
        output_fns: Vec<Vec<f64>>,
        coef: Vec<Vec<f64>>,
    ) -> Result<Self> {
        input_base.require_atomless()?;
        output_base.require_atomless()?;
        input_base.check_grid(&output_base)?;
        let m = input_base.len();
        if let Some(f) = input_fns.iter().chain(&output_fns).find(|f| f.len() != m) {
            return Err(Error::LengthMismatch(f.len(), m));
        }
        if coef.len() != input_fns.len() {
            return Err(Error::LengthMismatch(coef.len(), input_fns.len()));
        }
        if let Some(row) = coef.iter().find(|r| r.len() != output_fns.len()) {
            return Err(Error::LengthMismatch(row.len(), output_fns.len()));
        }
        Ok(Self {
            input_base,
            output_base,
            input_fns,
            output_fns,
            coef,
        })
    }

    pub fn input_base(&self) -> &Arc<DistributionQ> {
        &self.input_base
    }

    pub fn output_base(&self) -> &Arc<DistributionQ> {
        &self.output_base
    }

    pub fn coef(&self) -> &[Vec<f64>] {
        &self.coef
    }

    /// Kernel value `beta(s_k, t_l)` at grid indices `(k, l)`.
    pub fn value(&self, k: usize, l: usize) -> f64 {
        let mut acc = 0.0;
        for (row, phi) in self.coef.iter().zip(&self.input_fns) {
            let inner: f64 = row.iter().zip(&self.output_fns).map(|(c, psi)| c * psi[l]).sum();
            acc += phi[k] * inner;
        }
        acc
    }

    /// Dense `M x M` kernel matrix, row index over the input grid.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let m = self.input_base.len();
        // h_j(t) = sum_k c_jk psi_k(t)
        let h: Vec<Vec<f64>> = self
            .coef
            .iter()
            .map(|row| {
                (0..m)
                    .map(|l| row.iter().zip(&self.output_fns).map(|(c, psi)| c * psi[l]).sum())
                    .collect()
            })
            .collect();
        (0..m)
            .map(|k| {
                (0..m)
                    .map(|l| self.input_fns.iter().zip(&h).map(|(phi, hj)| phi[k] * hj[l]).sum())
                    .collect()
            })
            .collect()
    }

    /// Applies the operator to a tangent vector at the input base.
    pub fn apply(&self, g: &TangentVector) -> Result<TangentVector> {
        check_base(&g.base, &self.input_base)?;
        let grid = self.input_base.grid();
        let scores: Vec<f64> = self.input_fns.iter().map(|phi| grid.dot(phi, &g.vals)).collect();
        let mut out = vec![0.0; g.len()];
        for (k, psi) in self.output_fns.iter().enumerate() {
            let c: f64 = scores.iter().zip(&self.coef).map(|(s, row)| s * row[k]).sum();
            for (o, p) in out.iter_mut().zip(psi) {
                *o += c * p;
            }
        }
        Ok(TangentVector::from_parts(Arc::clone(&self.output_base), out))
    }

    /// `P A`: the operator conjugated by parallel transport to new bases. In
    /// quantile coordinates the kernel values are unchanged.
    pub fn transport(
        &self,
        input_base: &Arc<DistributionQ>,
        output_base: &Arc<DistributionQ>,
    ) -> Result<OperatorKernel> {
        self.input_base.check_grid(input_base)?;
        input_base.require_atomless()?;
        output_base.require_atomless()?;
        Ok(OperatorKernel {
            input_base: Arc::clone(input_base),
            output_base: Arc::clone(output_base),
            ..self.clone()
        })
    }

    /// Squared Hilbert–Schmidt norm `sum_k sum_l w_k w_l beta(s_k, t_l)^2`.
    pub fn hs_norm_sq(&self) -> f64 {
        self.hs_inner_unchecked(self)
    }

    /// `||A - B||_HS` for two operators between the same pair of bases.
    pub fn hs_distance(&self, other: &OperatorKernel) -> Result<f64> {
        check_base(&self.input_base, &other.input_base)?;
        check_base(&self.output_base, &other.output_base)?;
        // Express both operators in orthonormal bases of the joint factor spans
        // and compare coefficients directly; expanding the square instead loses
        // half the digits to cancellation when the operators are close.
        let grid = self.input_base.grid();
        let q_in = orthonormal_basis(grid, self.input_fns.iter().chain(&other.input_fns));
        let q_out = orthonormal_basis(grid, self.output_fns.iter().chain(&other.output_fns));
        let a = self.coefficients_in(&q_in, &q_out);
        let b = other.coefficients_in(&q_in, &q_out);
        let d2: f64 = a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(d2.sqrt())
    }

    /// Coefficients `c_rs` of the kernel in `sum_rs c_rs q_r(s) q'_s(t)`.
    fn coefficients_in(&self, q_in: &[Vec<f64>], q_out: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let grid = self.input_base.grid();
        let p_in: Vec<Vec<f64>> = q_in
            .iter()
            .map(|q| self.input_fns.iter().map(|f| grid.dot(q, f)).collect())
            .collect();
        let p_out: Vec<Vec<f64>> = q_out
            .iter()
            .map(|q| self.output_fns.iter().map(|f| grid.dot(q, f)).collect())
            .collect();
        p_in.iter()
            .map(|pi| {
                let row: Vec<f64> = (0..self.output_fns.len())
                    .map(|k| pi.iter().zip(&self.coef).map(|(x, c)| x * c[k]).sum())
                    .collect();
                p_out
                    .iter()
                    .map(|po| po.iter().zip(&row).map(|(x, y)| x * y).sum())
                    .collect()
            })
            .collect()
    }

    /// `sum_{j,k,j',k'} a_jk b_j'k' <phi_j, phi'_j'> <psi_k, psi'_k'>`.
    fn hs_inner_unchecked(&self, other: &OperatorKernel) -> f64 {
        let grid = self.input_base.grid();
        let gram = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .map(|x| b.iter().map(|y| grid.dot(x, y)).collect())
                .collect()
        };
        let g_in = gram(&self.input_fns, &other.input_fns);
        let g_out = gram(&self.output_fns, &other.output_fns);
        // T = A^T G_in B, then sum_{k,k'} T_kk' G_out_kk'
        let mut total = 0.0;
        for (k, gk) in g_out.iter().enumerate() {
            for (kp, g) in gk.iter().enumerate() {
                let mut t = 0.0;
                for (j, arow) in self.coef.iter().enumerate() {
                    let a = arow[k];
                    if a == 0.0 {
                        continue;
                    }
                    let inner: f64 = other
                        .coef
                        .iter()
                        .zip(&g_in[j])
                        .map(|(brow, gij)| gij * brow[kp])
                        .sum();
                    t += a * inner;
                }
                total += t * g;
            }
        }
        total
    }
}

/// Orthonormal basis (weighted inner product) of the span of `fns`, by
/// Gram–Schmidt with reorthogonalization. Directions that are numerically
/// dependent on earlier ones are dropped.
fn orthonormal_basis<'a>(
    grid: &crate::grid::ProbGrid,
    fns: impl Iterator<Item = &'a Vec<f64>>,
) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for f in fns {
        let norm0 = grid.dot(f, f).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = f.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = grid.dot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let norm = grid.dot(&v, &v).sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::wasserstein_distance;
    use crate::grid::ProbGrid;
    use crate::special::normal_quantile;

    fn grid(m: usize) -> Arc<ProbGrid> {
        Arc::new(ProbGrid::midpoint(m).unwrap())
    }

    fn normal(g: &Arc<ProbGrid>, u: f64, s: f64) -> DistributionQ {
        DistributionQ::from_quantile_fn(Arc::clone(g), |p| u + s * normal_quantile(p)).unwrap()
    }

    #[test]
    fn log_of_self_is_zero_and_exp_inverts() {
        let g = grid(200);
        let base = Arc::new(normal(&g, 0.0, 1.0));
        let v = log_map(&base, &base).unwrap();
        assert!(v.vals().iter().all(|&x| x == 0.0));
        assert_eq!(exp_map(&v).unwrap(), *base);

        let t = normal(&g, 0.3, 1.7);
        let v = log_map(&base, &t).unwrap();
        for (k, &p) in g.points().iter().enumerate() {
            assert!((v.vals()[k] - (0.3 + 0.7 * normal_quantile(p))).abs() < 1e-12);
        }
        let back = exp_map(&v).unwrap();
        assert!(wasserstein_distance(&back, &t).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_log_and_exp() {
        let g = grid(100);
        let base = Arc::new(DistributionQ::from_quantile_fn(Arc::clone(&g), |p| p).unwrap());
        let target = DistributionQ::from_quantile_fn(Arc::clone(&g), |p| 2.0 * p).unwrap();
        let v = log_map(&base, &target).unwrap();
        assert_eq!(v.vals(), g.points());
        assert_eq!(exp_map(&v).unwrap(), target);

        let one = TangentVector::new(Arc::clone(&base), vec![1.0; 100]).unwrap();
        let x = TangentVector::new(Arc::clone(&base), g.points().to_vec()).unwrap();
        assert!((inner_product(&one, &x).unwrap() - 0.5).abs() < 1e-12);
        let zero = TangentVector::zero(Arc::clone(&base)).unwrap();
        assert_eq!(inner_product(&x, &zero).unwrap(), 0.0);
    }

    #[test]
    fn atoms_in_base_are_rejected() {
        let g = grid(10);
        let base = Arc::new(DistributionQ::new(Arc::clone(&g), vec![0.0; 10]).unwrap());
        let t = DistributionQ::from_quantile_fn(Arc::clone(&g), |p| p).unwrap();
        assert!(matches!(log_map(&base, &t), Err(Error::NotAtomless { index: 0 })));
    }

    #[test]
    fn exp_outside_log_image_fails() {
        let g = grid(10);
        let base = Arc::new(DistributionQ::from_quantile_fn(Arc::clone(&g), |p| p).unwrap());
        let v = TangentVector::new(base, g.points().iter().map(|p| -2.0 * p).collect()).unwrap();
        assert!(!v.in_log_image());
        assert!(matches!(exp_map(&v), Err(Error::NotInLogImage { .. })));
    }

    #[test]
    fn geodesic_between_gaussians() {
        let g = grid(500);
        let a = normal(&g, 0.0, 1.0);
        let b = normal(&g, 2.0, 3.0);
        let mid = geodesic_point(&a, &b, 0.5).unwrap();
        assert!(wasserstein_distance(&mid, &normal(&g, 1.0, 2.0)).unwrap() < 1e-12);
        assert_eq!(geodesic_point(&a, &b, 0.0).unwrap(), a);
        assert_eq!(geodesic_point(&a, &b, 1.0).unwrap(), b);
        let d = wasserstein_distance(&a, &b).unwrap();
        let q = geodesic_point(&a, &b, 0.3).unwrap();
        assert!((wasserstein_distance(&a, &q).unwrap() - 0.3 * d).abs() < 1e-10);
        assert!(matches!(geodesic_point(&a, &b, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn transport_is_identity_on_values() {
        let g = grid(50);
        let b1 = Arc::new(normal(&g, 0.0, 1.0));
        let b2 = Arc::new(normal(&g, 1.0, 0.5));
        let v = log_map(&b1, &normal(&g, 0.2, 1.1)).unwrap();
        let u = log_map(&b1, &normal(&g, -0.4, 0.8)).unwrap();
        let pv = parallel_transport(&v, &b2).unwrap();
        let pu = parallel_transport(&u, &b2).unwrap();
        assert_eq!(inner_product(&pu, &pv).unwrap(), inner_product(&u, &v).unwrap());
        assert_eq!(parallel_transport(&pv, &b1).unwrap(), v);
        assert!(matches!(inner_product(&pu, &v), Err(Error::IncompatibleBase)));
    }

    #[test]
    fn kernel_transport_and_hs() {
        let g = grid(64);
        let b1 = Arc::new(normal(&g, 0.0, 1.0));
        let b2 = Arc::new(normal(&g, 1.0, 2.0));
        let f = |j: f64| -> Vec<f64> {
            g.points()
                .iter()
                .map(|p| 2f64.sqrt() * (2.0 * std::f64::consts::PI * j * p).sin())
                .collect()
        };
        let k = OperatorKernel::new(
            Arc::clone(&b1),
            Arc::clone(&b1),
            vec![f(1.0), f(2.0)],
            vec![f(1.0), f(3.0)],
            vec![vec![0.5, 0.1], vec![-0.2, 0.3]],
        )
        .unwrap();
        let pk = k.transport(&b2, &b2).unwrap();
        assert_eq!(pk.dense(), k.dense());
        assert_eq!(k.transport(&b1, &b1).unwrap().dense(), k.dense());

        // HS norm by factor algebra agrees with the double quadrature sum.
        let dense = k.dense();
        let w = 1.0 / 64.0;
        let brute: f64 = dense.iter().flatten().map(|v| w * w * v * v).sum();
        assert!((k.hs_norm_sq() - brute).abs() < 1e-12);
        // orthonormal factors: HS^2 = sum of squared coefficients
        assert!((k.hs_norm_sq() - (0.25 + 0.01 + 0.04 + 0.09)).abs() < 1e-12);

        let other = OperatorKernel::new(
            Arc::clone(&b1),
            Arc::clone(&b1),
            vec![f(1.0)],
            vec![f(1.0)],
            vec![vec![0.4]],
        )
        .unwrap();
        let od = other.dense();
        let brute: f64 = dense
            .iter()
            .flatten()
            .zip(od.iter().flatten())
            .map(|(a, b)| w * w * (a - b) * (a - b))
            .sum();
        assert!((k.hs_distance(&other).unwrap().powi(2) - brute).abs() < 1e-12);
        assert!(k.hs_distance(&pk).is_err());
    }

    #[test]
    fn kernel_apply_matches_rank_one_formula() {
        let g = grid(40);
        let b = Arc::new(normal(&g, 0.0, 1.0));
        let phi: Vec<f64> = g.points().iter().map(|p| 3f64.sqrt() * (2.0 * p - 1.0)).collect();
        let psi: Vec<f64> = vec![1.0; 40];
        let k = OperatorKernel::new(Arc::clone(&b), Arc::clone(&b), vec![phi.clone()], vec![psi], vec![vec![2.0]]).unwrap();
        let v = TangentVector::new(Arc::clone(&b), phi.clone()).unwrap();
        let out = k.apply(&v).unwrap();
        let norm2 = g.dot(&phi, &phi);
        for x in out.vals() {
            assert!((x - 2.0 * norm2).abs() < 1e-12);
        }
    }

    #[test]
    fn json_dump_shape() {
        let g = grid(3);
        let b = Arc::new(DistributionQ::new(g, vec![0.0, 1.0, 2.0]).unwrap());
        let v = TangentVector::new(b, vec![0.5, 0.0, -0.5]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"base":{"grid_m":3,"qvals":[0.0,1.0,2.0]},"vals":[0.5,0.0,-0.5]}"#);
    }
}
