//! Finite-dimensional stand-in for the coefficient algebra: `M_d(C)` with the
//! unnormalized matrix trace.
//!
//! Every piece of functional calculus (absolute values, Schatten norms,
//! spectral projections, lattice joins) goes through [`eig_hermitian`] after
//! [`hermitize`], so there is exactly one numerical pathway and one tolerance
//! budget for the whole crate.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance on `|A - A*|` accepted by [`eig_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues up to `t + SPECTRAL_TOL` count as "below the threshold".
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Rank cutoff on the spectrum of `sum P_i` in [`proj_join`].
pub const JOIN_RANK_TOL: f64 = 1e-8;
/// Idempotence tolerance for [`ProjectionElem`].
pub const PROJECTION_TOL: f64 = 1e-10;

/// A `d x d` complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatElem(DMatrix<C64>);

impl MatElem {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    /// Row-major complex entries.
    pub fn from_row_major(d: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: entries.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(d, d, entries)))
    }

    /// Row-major real entries.
    pub fn from_real(d: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(d, &c)
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self(m)
    }

    pub fn scalar(d: usize, c: f64) -> Self {
        Self::identity(d).scale(c)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.scale(c))
    }

    pub fn scale_complex(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Hilbert-Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        singular_values(self).into_iter().fold(0.0, f64::max)
    }

    /// `|A - A*|_HS`.
    pub fn hermitian_defect(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_defect() <= rel_tol * self.hs_norm().max(f64::MIN_POSITIVE)
    }

    pub fn row_major(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// Commutator `AB - BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn lambda_min(&self) -> f64 {
        let (vals, _) = eig_unchecked(&hermitize(self));
        vals.first().copied().unwrap_or(0.0)
    }

    /// Largest eigenvalue of the Hermitian part.
    pub fn lambda_max(&self) -> f64 {
        let (vals, _) = eig_unchecked(&hermitize(self));
        vals.last().copied().unwrap_or(0.0)
    }
}

impl<'a> Add<&'a MatElem> for &'a MatElem {
    type Output = MatElem;
    fn add(self, rhs: &'a MatElem) -> MatElem {
        MatElem(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a MatElem> for &'a MatElem {
    type Output = MatElem;
    fn sub(self, rhs: &'a MatElem) -> MatElem {
        MatElem(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a MatElem> for &'a MatElem {
    type Output = MatElem;
    fn mul(self, rhs: &'a MatElem) -> MatElem {
        MatElem(&self.0 * &rhs.0)
    }
}

impl Neg for &MatElem {
    type Output = MatElem;
    fn neg(self) -> MatElem {
        MatElem(-&self.0)
    }
}

/// An orthogonal projection in `M_d(C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionElem(MatElem);

impl ProjectionElem {
    /// Validates idempotence and self-adjointness.
    pub fn new(m: MatElem) -> Result<Self> {
        let defect_sa = m.hermitian_defect();
        if defect_sa > 1e-12 * m.hs_norm().max(1.0) {
            return Err(Error::NotProjection(format!(
                "self-adjoint defect {defect_sa:e}"
            )));
        }
        let sq = &m * &m;
        let defect_idem = (&sq - &m).op_norm();
        if defect_idem > PROJECTION_TOL {
            return Err(Error::NotProjection(format!(
                "idempotence defect {defect_idem:e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is a projection by construction; the result is
    /// hermitized.
    pub(crate) fn from_constructed(m: MatElem) -> Self {
        Self(hermitize(&m))
    }

    pub fn zero(d: usize) -> Self {
        Self(MatElem::zeros(d))
    }

    pub fn identity(d: usize) -> Self {
        Self(MatElem::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_mat(&self) -> &MatElem {
        &self.0
    }

    pub fn into_mat(self) -> MatElem {
        self.0
    }

    /// `1 - P`.
    pub fn complement(&self) -> Self {
        Self(&MatElem::identity(self.dim()) - &self.0)
    }

    /// Trace, which equals the rank.
    pub fn rank(&self) -> f64 {
        self.0.trace().re
    }
}

/// `(A + A*) / 2`.
pub fn hermitize(a: &MatElem) -> MatElem {
    MatElem((&a.0 + a.0.adjoint()).scale(0.5))
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, columns of
/// the unitary are the matching eigenvectors.
pub fn eig_hermitian(a: &MatElem) -> Result<(Vec<f64>, MatElem)> {
    let defect = a.hermitian_defect();
    let tol = HERMITIAN_TOL * a.hs_norm().max(1.0);
    if defect > tol {
        return Err(Error::NotHermitian {
            deviation: defect,
            tolerance: tol,
        });
    }
    Ok(eig_unchecked(&hermitize(a)))
}

fn eig_unchecked(h: &MatElem) -> (Vec<f64>, MatElem) {
    let d = h.dim();
    if d == 1 {
        return (vec![h.0[(0, 0)].re], MatElem::identity(1));
    }
    let eig = h.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, MatElem(u))
}

/// `f(A)` for Hermitian `A`.
pub fn functional_calculus(a: &MatElem, f: impl Fn(f64) -> f64) -> Result<MatElem> {
    let (vals, u) = eig_hermitian(a)?;
    Ok(reassemble(&vals.iter().map(|&v| f(v)).collect::<Vec<_>>(), &u))
}

fn reassemble(vals: &[f64], u: &MatElem) -> MatElem {
    let d = vals.len();
    let mut scaled = u.0.clone();
    for (j, &v) in vals.iter().enumerate() {
        for i in 0..d {
            scaled[(i, j)] *= v;
        }
    }
    hermitize(&MatElem(scaled * u.0.adjoint()))
}

/// Spectral projection of `A` onto the closed interval `(-inf, t]`, with ties
/// within [`SPECTRAL_TOL`] of `t` included.
pub fn spectral_projection(a: &MatElem, t: f64) -> Result<ProjectionElem> {
    let (vals, u) = eig_hermitian(a)?;
    Ok(projection_from_eig(&vals, &u, |v| v <= t + SPECTRAL_TOL))
}

fn projection_from_eig(vals: &[f64], u: &MatElem, keep: impl Fn(f64) -> bool) -> ProjectionElem {
    let d = vals.len();
    let mut p = DMatrix::zeros(d, d);
    for (j, &v) in vals.iter().enumerate() {
        if keep(v) {
            let col = u.0.column(j);
            p += &col * col.adjoint();
        }
    }
    ProjectionElem::from_constructed(MatElem(p))
}

/// `|A| = (A*A)^{1/2}`.
pub fn mat_abs(a: &MatElem) -> MatElem {
    let (vals, u) = eig_unchecked(&hermitize(&(&a.adjoint() * a)));
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    reassemble(&roots, &u)
}

/// Singular values, ascending.
pub fn singular_values(a: &MatElem) -> Vec<f64> {
    let (vals, _) = eig_unchecked(&hermitize(&(&a.adjoint() * a)));
    vals.into_iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// `(sum sigma_i^p)^{1/p}`; `p = f64::INFINITY` gives the operator norm.
pub fn schatten_norm(a: &MatElem, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let sv = singular_values(a);
    Ok(schatten_from_singular(&sv, p))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

pub(crate) fn schatten_from_singular(sv: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        sv.iter().copied().fold(0.0, f64::max)
    } else {
        sv.iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `trace(|A|^p)`, the integrand of the `L_p` norm of a field.
pub fn trace_abs_pow(a: &MatElem, p: f64) -> f64 {
    singular_values(a).iter().map(|s| s.powf(p)).sum()
}

/// Orthogonal projection onto the sum of the ranges.
pub fn proj_join(dim: usize, ps: &[&ProjectionElem]) -> Result<ProjectionElem> {
    if ps.is_empty() {
        return Ok(ProjectionElem::zero(dim));
    }
    let mut sum = MatElem::zeros(dim);
    for p in ps {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        sum = &sum + p.as_mat();
    }
    if ps.len() == 1 {
        return Ok(ps[0].clone());
    }
    let (vals, u) = eig_unchecked(&hermitize(&sum));
    Ok(projection_from_eig(&vals, &u, |v| v > JOIN_RANK_TOL))
}

/// `|trace(AB)|`, used in Hölder checks.
pub fn trace_pairing(a: &MatElem, b: &MatElem) -> f64 {
    (a * b).trace().norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, d: usize) -> MatElem {
        let e: Vec<C64> = (0..d * d)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        MatElem::from_row_major(d, &e).unwrap()
    }

    fn close(a: &MatElem, b: &MatElem, tol: f64) -> bool {
        (a - b).op_norm() <= tol
    }

    #[test]
    fn hermitize_examples() {
        let a = MatElem::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let expect = MatElem::from_real(2, &[0.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(hermitize(&a), expect);
        let h = MatElem::from_real(2, &[2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(hermitize(&h), h);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = hermitize(&random_mat(&mut rng, 4));
        assert_eq!(r.hermitian_defect(), 0.0);
    }

    #[test]
    fn eig_examples() {
        let (v, _) = eig_hermitian(&MatElem::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(v, vec![1.0, 3.0]);
        // characteristic polynomial (2 - l)^2 - 1 = 0 gives l = 1, 3
        let a = MatElem::from_real(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let (v, u) = eig_hermitian(&a).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12);
        let utu = &u.adjoint() * &u;
        assert!(close(&utu, &MatElem::identity(2), 1e-10));
        let (v, _) = eig_hermitian(&MatElem::identity(3)).unwrap();
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn eig_reconstructs_and_rejects_non_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2, 3, 5] {
            let a = hermitize(&random_mat(&mut rng, d));
            let (v, u) = eig_hermitian(&a).unwrap();
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
            let back = reassemble(&v, &u);
            assert!(close(&back, &a, 1e-12));
        }
        let bad = MatElem::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(eig_hermitian(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn spectral_projection_examples() {
        let p = spectral_projection(&MatElem::diag(&[1.0, 3.0]), 2.0).unwrap();
        assert!(close(p.as_mat(), &MatElem::diag(&[1.0, 0.0]), 1e-14));
        let p = spectral_projection(&MatElem::diag(&[0.5, 1.0]), 2.0).unwrap();
        assert!(close(p.as_mat(), &MatElem::identity(2), 1e-14));
        let a = MatElem::from_real(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let p = spectral_projection(&a, 2.0).unwrap();
        let expect = MatElem::from_real(2, &[0.5, -0.5, -0.5, 0.5]).unwrap();
        assert!(close(p.as_mat(), &expect, 1e-12));
        // tie at exactly t is kept
        let p = spectral_projection(&MatElem::diag(&[2.0, 3.0]), 2.0).unwrap();
        assert!((p.rank() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mat_abs_examples() {
        assert!(close(&mat_abs(&MatElem::diag(&[-2.0, 3.0])), &MatElem::diag(&[2.0, 3.0]), 1e-12));
        let pos = MatElem::from_real(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(close(&mat_abs(&pos), &pos, 1e-12));
        let a = MatElem::from_real(2, &[0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!(close(&mat_abs(&a), &MatElem::diag(&[0.0, 2.0]), 1e-12));
    }

    #[test]
    fn schatten_examples() {
        assert!((schatten_norm(&MatElem::identity(2), 1.0).unwrap() - 2.0).abs() < 1e-14);
        let a = MatElem::diag(&[3.0, 4.0]);
        assert!((schatten_norm(&a, 2.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((schatten_norm(&a, f64::INFINITY).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(schatten_norm(&a, 0.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn join_examples() {
        let p = ProjectionElem::new(MatElem::diag(&[1.0, 0.0])).unwrap();
        let q = ProjectionElem::new(MatElem::diag(&[0.0, 1.0])).unwrap();
        assert_eq!(proj_join(2, &[&p]).unwrap(), p);
        let j = proj_join(2, &[&p, &q]).unwrap();
        assert!(close(j.as_mat(), &MatElem::identity(2), 1e-12));
        assert_eq!(proj_join(3, &[]).unwrap(), ProjectionElem::zero(3));
    }

    fn rank_one(v: &[C64]) -> ProjectionElem {
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let d = v.len();
        let mut e = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                e.push(v[i] * v[j].conj() / (n * n));
            }
        }
        ProjectionElem::new(MatElem::from_row_major(d, &e).unwrap()).unwrap()
    }

    // Gram-Schmidt on the stacked range vectors, independent of the
    // eigen-solver path used by proj_join.
    fn gram_schmidt_projection(vectors: &[Vec<C64>]) -> MatElem {
        let d = vectors[0].len();
        let mut basis: Vec<Vec<C64>> = Vec::new();
        for v in vectors {
            let mut w = v.clone();
            for b in &basis {
                let dot: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= dot * bi;
                }
            }
            let n: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-9 {
                basis.push(w.iter().map(|z| z / n).collect());
            }
        }
        let mut e = vec![C64::new(0.0, 0.0); d * d];
        for b in &basis {
            for i in 0..d {
                for j in 0..d {
                    e[i * d + j] += b[i] * b[j].conj();
                }
            }
        }
        MatElem::from_row_major(d, &e).unwrap()
    }

    #[test]
    fn join_of_random_rank_one_matches_orthonormalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v1: Vec<C64> = (0..3).map(|_| C64::new(rng.gen(), rng.gen())).collect();
            let v2: Vec<C64> = (0..3).map(|_| C64::new(rng.gen(), rng.gen())).collect();
            let j = proj_join(3, &[&rank_one(&v1), &rank_one(&v2)]).unwrap();
            assert!((j.rank() - 2.0).abs() < 1e-10);
            assert!(close(j.as_mat(), &gram_schmidt_projection(&[v1, v2]), 1e-10));
        }
    }

    #[test]
    fn projection_constructor_rejects_non_projections() {
        assert!(ProjectionElem::new(MatElem::diag(&[0.5, 1.0])).is_err());
        assert!(ProjectionElem::new(MatElem::from_real(2, &[1.0, 1.0, 0.0, 0.0]).unwrap()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mat_strategy(d: usize) -> impl Strategy<Value = MatElem> {
            proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), d * d).prop_map(move |v| {
                let e: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
                MatElem::from_row_major(d, &e).unwrap()
            })
        }

        proptest! {
            #[test]
            fn spectral_projection_commutes_and_compresses(a in mat_strategy(3), t in 0.0f64..3.0) {
                let h = hermitize(&a);
                let p = spectral_projection(&h, t).unwrap();
                let norm = h.op_norm();
                prop_assert!(p.as_mat().commutator(&h).op_norm() <= 1e-8 * norm.max(1.0));
                let compressed = &(p.as_mat() * &h) * p.as_mat();
                prop_assert!(compressed.lambda_max() <= t + 1e-8 * (1.0 + norm));
            }

            #[test]
            fn schatten_is_a_norm(a in mat_strategy(3), b in mat_strategy(3), c in -3.0f64..3.0, p in 1.0f64..6.0) {
                let na = schatten_norm(&a, p).unwrap();
                let nb = schatten_norm(&b, p).unwrap();
                let nab = schatten_norm(&(&a + &b), p).unwrap();
                prop_assert!(nab <= (na + nb) * (1.0 + 1e-10) + 1e-12);
                let nca = schatten_norm(&a.scale(c), p).unwrap();
                prop_assert!((nca - c.abs() * na).abs() <= 1e-10 * (1.0 + na * c.abs()));
            }

            #[test]
            fn holder_inequality(a in mat_strategy(3), b in mat_strategy(3), p in 1.0f64..8.0) {
                let q = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
                let lhs = trace_pairing(&a, &b);
                let rhs = schatten_norm(&a, p).unwrap() * schatten_norm(&b, q).unwrap();
                prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
            }

            #[test]
            fn join_is_a_dominating_projection(a in mat_strategy(3), b in mat_strategy(3), t in 0.0f64..2.0) {
                let p1 = spectral_projection(&hermitize(&a), t).unwrap();
                let p2 = spectral_projection(&hermitize(&b), t).unwrap();
                let j = proj_join(3, &[&p1, &p2]).unwrap();
                prop_assert!(ProjectionElem::new(j.as_mat().clone()).is_ok());
                for p in [&p1, &p2] {
                    prop_assert!((p.as_mat() * j.complement().as_mat()).op_norm() <= 1e-8);
                }
            }
        }
    }
}
