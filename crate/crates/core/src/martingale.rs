//! Dyadic martingales of fields and Cuculescu's projections.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcspace::{cond_expectation, lp_norm, OperatorField};
use crate::matalg::{hermitize, spectral_projection, MatElem};

/// `f_k = E_k f` for `k = 0..=depth`, each stored at its own level.
#[derive(Clone, Debug)]
pub struct MartingaleSeq {
    source: OperatorField,
    levels: Vec<OperatorField>,
}

pub fn build_martingale(f: &OperatorField) -> MartingaleSeq {
    let source = f.to_finest();
    let levels = (0..=source.grid().depth)
        .map(|k| cond_expectation(&source, k).expect("k <= depth"))
        .collect();
    MartingaleSeq { source, levels }
}

impl MartingaleSeq {
    /// The field at the finest level.
    pub fn source(&self) -> &OperatorField {
        &self.source
    }

    pub fn depth(&self) -> u32 {
        self.source.grid().depth
    }

    /// `f_k`, a level-`k` field.
    pub fn level(&self, k: u32) -> &OperatorField {
        &self.levels[k as usize]
    }

    /// `df_k = f_k - f_{k-1}` at level `k`, with `df_0 = f_0`.
    pub fn diff(&self, k: u32) -> OperatorField {
        if k == 0 {
            return self.levels[0].clone();
        }
        self.levels[k as usize]
            .sub(&self.levels[k as usize - 1])
            .expect("same grid")
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.source
            .values()
            .iter()
            .all(|v| v.is_hermitian(tol) && hermitize(v).lambda_min() >= -tol * v.op_norm().max(1.0))
    }
}

/// Decreasing projections `q_0 >= q_1 >= ... >= q_K` with `q_n` constant on
/// level-`n` cubes, and increments `p_n = q_{n-1} - q_n`.
#[derive(Clone, Debug)]
pub struct CuculescuFamily {
    t: f64,
    q: Vec<OperatorField>,
    p: Vec<OperatorField>,
}

/// Recursive construction `q_n = q_{n-1} chi_[0,t](q_{n-1} f_n q_{n-1})`.
pub fn cuculescu(m: &MartingaleSeq, t: f64) -> Result<CuculescuFamily> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!("threshold must be positive, got {t}")));
    }
    let f0 = m.level(0);
    for (cell, v) in f0.values().iter().enumerate() {
        let lmax = hermitize(v).lambda_max();
        if lmax > t + 1e-9 {
            return Err(Error::ThresholdPrecondition {
                cell,
                lambda_max: lmax,
                t,
            });
        }
    }
    let grid = m.source().grid().clone();
    let d = grid.d;
    let mut q = vec![OperatorField::identity(&grid, 0)];
    let mut p = vec![OperatorField::zeros(&grid, 0)];
    for n in 1..=m.depth() {
        let prev = &q[n as usize - 1];
        let fnl = m.level(n);
        let vals: Vec<Result<MatElem>> = (0..grid.n_cells(n))
            .into_par_iter()
            .map(|c| {
                let qp = prev.value_at(c, n);
                let a = hermitize(&(&(qp * fnl.value(c)) * qp));
                let chi = spectral_projection(&a, t)?;
                Ok(hermitize(&(qp * chi.as_mat())))
            })
            .collect();
        let qn = OperatorField::new(&grid, n, vals.into_iter().collect::<Result<_>>()?)?;
        let pn = prev.refine(n)?.sub(&qn)?;
        q.push(qn);
        p.push(pn);
    }
    debug_assert_eq!(q[0].dim(), d);
    Ok(CuculescuFamily { t, q, p })
}

impl CuculescuFamily {
    pub fn threshold(&self) -> f64 {
        self.t
    }

    pub fn depth(&self) -> u32 {
        (self.q.len() - 1) as u32
    }

    /// `q_n` at level `n`.
    pub fn q(&self, n: u32) -> &OperatorField {
        &self.q[n as usize]
    }

    /// `p_n` at level `n`, for `n >= 1`; `p_0` is the zero field.
    pub fn p(&self, n: u32) -> &OperatorField {
        &self.p[n as usize]
    }

    /// `q = q_K`, the infimum in the truncated model; also `p_inf`.
    pub fn q_final(&self) -> &OperatorField {
        self.q.last().expect("q_0 always present")
    }

    /// `(tau ⊗ ∫)(1 - q)`.
    pub fn trace_q_perp(&self) -> f64 {
        let q = self.q_final();
        let d = q.dim() as f64;
        d - q.integral_trace().re
    }

    /// Levels `n >= 1` where `p_n` is nonzero somewhere.
    pub fn active_levels(&self) -> Vec<u32> {
        (1..=self.depth())
            .filter(|&n| self.p[n as usize].sup_norm() > 1e-12)
            .collect()
    }
}

/// Worst observed defects of the four construction guarantees.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct CuculescuReport {
    /// Largest `|[q_n, q_{n-1} f_n q_{n-1}]|`.
    pub commutation: f64,
    /// Largest `lambda_max(q_n f_n q_n) - t`, and the same for `q f_k q`.
    pub compression_excess: f64,
    pub final_compression_excess: f64,
    /// Largest `|q_n (1 - q_{n-1})|`.
    pub monotonicity: f64,
    /// Largest projection defect `|q_n^2 - q_n|` or `|q_n - q_n*|`.
    pub projection: f64,
    /// Largest `|p_m p_n|` for `m != n`, and `|sum p_n + q - 1|`.
    pub orthogonality: f64,
    pub partition: f64,
    pub trace_q_perp: f64,
    pub trace_bound: f64,
}

impl CuculescuReport {
    pub fn passes(&self) -> bool {
        self.commutation <= 1e-8
            && self.compression_excess <= 1e-8
            && self.final_compression_excess <= 1e-8
            && self.monotonicity <= 1e-8
            && self.projection <= 1e-8
            && self.orthogonality <= 1e-8
            && self.partition <= 1e-8
            && self.trace_q_perp <= self.trace_bound + 1e-8
    }
}

pub fn check_cuculescu(m: &MartingaleSeq, fam: &CuculescuFamily) -> CuculescuReport {
    let t = fam.t;
    let k_max = m.depth();
    let mut r = CuculescuReport {
        trace_q_perp: fam.trace_q_perp(),
        trace_bound: lp_norm(m.source(), 1.0).expect("p = 1") / t,
        ..Default::default()
    };
    let scale = |v: &MatElem| 1.0 + v.op_norm();
    for n in 1..=k_max {
        let qn = fam.q(n);
        let prev = fam.q(n - 1);
        for c in 0..qn.values().len() {
            let q = qn.value(c);
            let qp = prev.value_at(c, n);
            let f = m.level(n).value(c);
            let a = &(qp * f) * qp;
            r.commutation = r.commutation.max(q.commutator(&a).op_norm() / scale(&a));
            let comp = hermitize(&(&(q * f) * q));
            r.compression_excess = r.compression_excess.max(comp.lambda_max() - t);
            let id = MatElem::identity(q.dim());
            r.monotonicity = r.monotonicity.max((q * &(&id - qp)).op_norm());
            r.projection = r
                .projection
                .max((&(q * q) - q).op_norm())
                .max(q.hermitian_defect());
        }
    }
    let qf = fam.q_final();
    for k in 0..=k_max {
        let fk = m.level(k);
        for c in 0..qf.values().len() {
            let q = qf.value(c);
            let v = hermitize(&(&(q * fk.value_at(c, k_max)) * q));
            r.final_compression_excess = r.final_compression_excess.max(v.lambda_max() - t);
        }
    }
    let d = qf.dim();
    for c in 0..qf.values().len() {
        let ps: Vec<&MatElem> = (1..=k_max).map(|n| fam.p(n).value_at(c, k_max)).collect();
        let mut sum = qf.value(c).clone();
        for (a, pa) in ps.iter().enumerate() {
            sum = &sum + pa;
            for pb in &ps[a + 1..] {
                r.orthogonality = r.orthogonality.max((*pa * *pb).op_norm());
            }
            r.orthogonality = r.orthogonality.max((*pa * qf.value(c)).op_norm());
        }
        r.partition = r.partition.max((&sum - &MatElem::identity(d)).op_norm());
    }
    r.compression_excess = r.compression_excess.max(0.0);
    r.final_compression_excess = r.final_compression_excess.max(0.0);
    r
}
