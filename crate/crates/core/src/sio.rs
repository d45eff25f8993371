//! Discretized singular integral operators acting on operator-valued fields.
//!
//! An operator is a dense `cells x cells` real matrix over the finest cells,
//! acting on matrix-valued data entrywise (tensored with the identity of
//! `M_d`). Conditional expectations are applied as block averages of rows or
//! columns, so compositions with `E_m` and `Delta_m` never form the averaging
//! matrices explicitly.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::GridSpec;
use crate::error::{Error, Result};
use crate::funcspace::OperatorField;
use crate::kernels::{corrected_kernel, truncate_far, Kernel, Quadrature};
use crate::matalg::{MatElem, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    pub grid: GridSpec,
    pub matrix: DMatrix<f64>,
    pub label: String,
}

/// `matrix[c, c'] = sum over quadrature nodes y of cell c' of w k(center c, y)`,
/// with zero diagonal.
pub fn discretize<K: Kernel + ?Sized>(kernel: &K, quad: &Quadrature, label: &str) -> Result<DiscreteOperator> {
    if kernel.n() != quad.grid.n {
        return Err(Error::DimensionMismatch {
            expected: quad.grid.n,
            found: kernel.n(),
        });
    }
    let n = quad.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|r| quad.row(kernel, r)).collect();
    for (r, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteKernel { row: r, col: c });
        }
    }
    let matrix = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
    Ok(DiscreteOperator {
        grid: quad.grid.clone(),
        matrix,
        label: label.to_string(),
    })
}

impl DiscreteOperator {
    pub fn from_matrix(grid: &GridSpec, matrix: DMatrix<f64>, label: &str) -> Result<Self> {
        let n = grid.n_finest();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            matrix,
            label: label.to_string(),
        })
    }

    pub fn zeros(grid: &GridSpec, label: &str) -> Self {
        let n = grid.n_finest();
        Self {
            grid: grid.clone(),
            matrix: DMatrix::zeros(n, n),
            label: label.to_string(),
        }
    }

    pub fn identity(grid: &GridSpec) -> Self {
        let n = grid.n_finest();
        Self {
            grid: grid.clone(),
            matrix: DMatrix::identity(n, n),
            label: "identity".into(),
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            matrix: self.matrix.transpose(),
            label: format!("{}*", self.label),
        }
    }

    /// Row-major little-endian `f64` dump, preceded by nothing: the side
    /// length is `sqrt(len / 8)`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.size();
        let mut buf = Vec::with_capacity(n * n * 8);
        for r in 0..n {
            for c in 0..n {
                buf.extend_from_slice(&self.matrix[(r, c)].to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in 0..self.size() {
            let row: Vec<String> = (0..self.size())
                .map(|c| format!("{:e}", self.matrix[(r, c)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `(Tf)_c = sum_c' matrix[c, c'] f_c'` on the finest level.
pub fn apply(op: &DiscreteOperator, f: &OperatorField) -> Result<OperatorField> {
    if f.grid().n != op.grid.n || f.grid().depth != op.grid.depth {
        return Err(Error::GridMismatch(format!(
            "operator on {:?}, field on {:?}",
            op.grid,
            f.grid()
        )));
    }
    let f = f.to_finest();
    let d = f.dim();
    let n = op.size();
    let mut re = DMatrix::zeros(n, d * d);
    let mut im = DMatrix::zeros(n, d * d);
    for (c, v) in f.values().iter().enumerate() {
        for (e, z) in v.row_major().iter().enumerate() {
            re[(c, e)] = z.re;
            im[(c, e)] = z.im;
        }
    }
    let out_re = &op.matrix * re;
    let out_im = &op.matrix * im;
    let values = (0..n)
        .map(|c| {
            let e: Vec<C64> = (0..d * d)
                .map(|j| C64::new(out_re[(c, j)], out_im[(c, j)]))
                .collect();
            MatElem::from_row_major(d, &e).expect("square")
        })
        .collect();
    OperatorField::new(f.grid(), f.grid().depth, values)
}

/// `sqrt(max row sum of |m| * max column sum of |m|)`.
pub fn schur_bound(op: &DiscreteOperator) -> f64 {
    let m = &op.matrix;
    let rows = (0..m.nrows())
        .map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let cols = (0..m.ncols())
        .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    (rows * cols).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const OPNORM_TOL: f64 = 1e-10;
pub const OPNORM_ITERS: usize = 1000;
pub const OPNORM_SEED: u64 = 0x5eed;

/// Largest singular value by power iteration on `M^T M` from a seeded start.
pub fn opnorm2(op: &DiscreteOperator, iters: usize, tol: f64, seed: u64) -> NormEstimate {
    matrix_norm2(&op.matrix, iters, tol, seed)
}

pub fn matrix_norm2(m: &DMatrix<f64>, iters: usize, tol: f64, seed: u64) -> NormEstimate {
    let n = m.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let nv = v.norm();
    if nv == 0.0 || n == 0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    v /= nv;
    let mut sigma = 0.0;
    for it in 1..=iters.max(1) {
        let mv = m * &v;
        let next = mv.norm();
        let w = m.transpose() * mv;
        let wn = w.norm();
        if wn == 0.0 {
            return NormEstimate {
                value: next,
                iterations: it,
                converged: true,
            };
        }
        v = w / wn;
        if (next - sigma).abs() <= tol * next {
            return NormEstimate {
                value: next,
                iterations: it,
                converged: true,
            };
        }
        sigma = next;
    }
    NormEstimate {
        value: sigma,
        iterations: iters,
        converged: false,
    }
}

fn groups(grid: &GridSpec, level: u32) -> (Vec<usize>, usize) {
    let table = grid.ancestor_table(level);
    (table, grid.n_cells(level))
}

/// `E_m M`: rows averaged within each level-`m` cube.
pub fn expect_left(grid: &GridSpec, m: &DMatrix<f64>, level: u32) -> DMatrix<f64> {
    let (table, ng) = groups(grid, level);
    let size = (table.len() / ng) as f64;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut sums = vec![0.0; ng];
    for j in 0..m.ncols() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let col = m.column(j);
        for (r, &g) in table.iter().enumerate() {
            sums[g] += col[r];
        }
        let mut oc = out.column_mut(j);
        for (r, &g) in table.iter().enumerate() {
            oc[r] = sums[g] / size;
        }
    }
    out
}

/// `M E_m`: columns averaged within each level-`m` cube.
pub fn expect_right(grid: &GridSpec, m: &DMatrix<f64>, level: u32) -> DMatrix<f64> {
    let (table, ng) = groups(grid, level);
    let size = (table.len() / ng) as f64;
    let mut sums = vec![DVector::<f64>::zeros(m.nrows()); ng];
    for (c, &g) in table.iter().enumerate() {
        sums[g] += m.column(c);
    }
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (c, &g) in table.iter().enumerate() {
        out.set_column(c, &(&sums[g] / size));
    }
    out
}

/// `Delta_m M`, with `Delta_0 = E_0`.
pub fn delta_left(grid: &GridSpec, m: &DMatrix<f64>, level: u32) -> DMatrix<f64> {
    let a = expect_left(grid, m, level);
    if level == 0 {
        a
    } else {
        a - expect_left(grid, m, level - 1)
    }
}

/// `M Delta_m`, with `Delta_0 = E_0`.
pub fn delta_right(grid: &GridSpec, m: &DMatrix<f64>, level: u32) -> DMatrix<f64> {
    let a = expect_right(grid, m, level);
    if level == 0 {
        a
    } else {
        a - expect_right(grid, m, level - 1)
    }
}

/// The matrix of `Delta_m` itself.
pub fn delta_matrix(grid: &GridSpec, level: u32) -> DMatrix<f64> {
    let n = grid.n_finest();
    delta_left(grid, &DMatrix::identity(n, n), level)
}

/// Discretized `T`, `T_k` and `S_{k,s}` for one kernel, built on demand and
/// shared between assemblies.
pub struct OperatorCache<'a, K: Kernel + ?Sized> {
    pub kernel: &'a K,
    pub gamma: f64,
    pub quad: Quadrature,
    t: RwLock<Option<Arc<DMatrix<f64>>>>,
    t_k: RwLock<BTreeMap<u32, Arc<DMatrix<f64>>>>,
    s_ks: RwLock<BTreeMap<(u32, u32), Arc<DMatrix<f64>>>>,
}

impl<'a, K: Kernel + ?Sized> OperatorCache<'a, K> {
    pub fn new(kernel: &'a K, gamma: f64, grid: &GridSpec) -> Self {
        Self {
            kernel,
            gamma,
            quad: Quadrature::new(grid),
            t: RwLock::new(None),
            t_k: RwLock::new(BTreeMap::new()),
            s_ks: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.quad.grid
    }

    pub fn depth(&self) -> u32 {
        self.quad.grid.depth
    }

    pub fn t(&self) -> Result<Arc<DMatrix<f64>>> {
        if let Some(m) = self.t.read().expect("lock").as_ref() {
            return Ok(m.clone());
        }
        let m = Arc::new(discretize(self.kernel, &self.quad, "T")?.matrix);
        *self.t.write().expect("lock") = Some(m.clone());
        Ok(m)
    }

    pub fn t_k(&self, k: u32) -> Result<Arc<DMatrix<f64>>> {
        if let Some(m) = self.t_k.read().expect("lock").get(&k) {
            return Ok(m.clone());
        }
        let m = Arc::new(discretize(&truncate_far(self.kernel, k), &self.quad, "T_k")?.matrix);
        self.t_k.write().expect("lock").insert(k, m.clone());
        Ok(m)
    }

    pub fn s_ks(&self, k: u32, s: u32) -> Result<Arc<DMatrix<f64>>> {
        if let Some(m) = self.s_ks.read().expect("lock").get(&(k, s)) {
            return Ok(m.clone());
        }
        let ck = corrected_kernel(self.kernel, self.gamma, &self.quad, k, s)?;
        let m = Arc::new(discretize(&ck, &self.quad, "S_ks")?.matrix);
        self.s_ks.write().expect("lock").insert((k, s), m.clone());
        Ok(m)
    }

    /// Shifted kernel `T_{k,s}` (not cached).
    pub fn t_ks(&self, k: u32, s: u32) -> Result<DMatrix<f64>> {
        let sd = crate::kernels::shift_difference(self.kernel, k, s)?;
        Ok(discretize(&sd, &self.quad, "T_ks")?.matrix)
    }

    /// Levels `k` contributing to `Phi_i`.
    pub fn phi_range(&self, i: u32, s: u32) -> std::ops::RangeInclusive<u32> {
        1..=self.depth().saturating_sub(i.max(s))
    }

    /// Levels `k` contributing to `Psi_i`.
    pub fn psi_range(&self, i: u32, s: u32) -> std::ops::RangeInclusive<u32> {
        i.max(1)..=self.depth().saturating_sub(s)
    }

    /// `Phi_i = sum_k Delta_{k+i} T_k Delta_{k+s}`.
    pub fn assemble_phi(&self, i: u32, s: u32) -> Result<DiscreteOperator> {
        let g = self.grid().clone();
        let mut acc = DMatrix::zeros(g.n_finest(), g.n_finest());
        for k in self.phi_range(i, s) {
            let tk = self.t_k(k)?;
            let right = delta_right(&g, &tk, k + s);
            acc += delta_left(&g, &right, k + i);
        }
        DiscreteOperator::from_matrix(&g, acc, &format!("Phi_{i} (s={s})"))
    }

    /// `Psi_i = sum_k Delta_{k-i} S_{k,s} Delta_{k+s}`.
    pub fn assemble_psi(&self, i: u32, s: u32) -> Result<DiscreteOperator> {
        let g = self.grid().clone();
        let mut acc = DMatrix::zeros(g.n_finest(), g.n_finest());
        for k in self.psi_range(i, s) {
            let sk = self.s_ks(k, s)?;
            let right = delta_right(&g, &sk, k + s);
            acc += delta_left(&g, &right, k - i);
        }
        DiscreteOperator::from_matrix(&g, acc, &format!("Psi_{i} (s={s})"))
    }
}

/// Projections `A_k` (level-`k` fields) and their dilated join `A_{f,s}`.
#[derive(Clone, Debug)]
pub struct PseudolocFamily {
    pub s: u32,
    pub a_k: BTreeMap<u32, OperatorField>,
    pub a_fs: OperatorField,
}

/// `A_{f,s}(x) = join over k and level-k cubes Q with x in 5Q of A_Q`.
pub fn pseudoloc_family(grid: &GridSpec, a_k: BTreeMap<u32, OperatorField>, s: u32) -> Result<PseudolocFamily> {
    for (&k, a) in &a_k {
        if a.level() != k {
            return Err(Error::LevelOutOfRange {
                level: a.level() as i64,
                min: k as i64,
                max: k as i64,
            });
        }
        for v in a.values() {
            crate::matalg::ProjectionElem::new(v.clone())?;
        }
    }
    let levels: Vec<(u32, &OperatorField)> = a_k.iter().map(|(&k, f)| (k, f)).collect();
    let a_fs = crate::czdecomp::dilated_join(grid, &levels, 5)?;
    Ok(PseudolocFamily { s, a_k, a_fs })
}

/// `A_k = p_k` from a Cuculescu family.
pub fn pseudoloc_from_cuculescu(fam: &crate::martingale::CuculescuFamily, s: u32) -> Result<PseudolocFamily> {
    let grid = fam.q_final().grid().clone();
    let a_k = fam
        .active_levels()
        .into_iter()
        .map(|k| (k, fam.p(k).clone()))
        .collect();
    pseudoloc_family(&grid, a_k, s)
}

impl PseudolocFamily {
    /// `1 - A_{f,s}` at the finest level.
    pub fn complement(&self) -> OperatorField {
        self.a_fs.map(|v| &MatElem::identity(v.dim()) - v)
    }
}

/// Rademacher average `E[l_m(x) k(x,y) g_m(y)]` with `l_m = sum_Q eps_Q 1_{5Q}`
/// and `g_m = sum_Q eps_Q 1_Q` over level-`m` cubes, expanded with
/// `E[eps_Q eps_Q'] = delta_{QQ'}`.
pub struct MaskedKernel<'a, K: Kernel + ?Sized> {
    pub base: &'a K,
    pub m: u32,
}

pub fn masking_expectation<K: Kernel + ?Sized>(base: &K, m: u32) -> MaskedKernel<'_, K> {
    MaskedKernel { base, m }
}

impl<K: Kernel + ?Sized> MaskedKernel<'_, K> {
    /// `sum_{Q, Q'} E[eps_Q eps_Q'] 1_{5Q}(x) 1_{Q'}(y)`.
    pub fn weight(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let side = 1i64 << self.m;
        let xi: Vec<i64> = x.iter().map(|&v| (v * side as f64).floor() as i64).collect();
        let yi: Vec<i64> = y.iter().map(|&v| (v * side as f64).floor() as i64).collect();
        let total = (side as usize).pow(n as u32);
        let index = |mut f: usize| {
            let mut idx = vec![0i64; n];
            for j in (0..n).rev() {
                idx[j] = (f % side as usize) as i64;
                f /= side as usize;
            }
            idx
        };
        let mut w = 0.0;
        for a in 0..total {
            let qa = index(a);
            let in_5q = qa.iter().zip(&xi).all(|(c, v)| (c - v).abs() <= 2);
            if !in_5q {
                continue;
            }
            for b in 0..total {
                let qb = index(b);
                let in_q = qb == yi;
                let corr = if a == b { 1.0 } else { 0.0 };
                if in_q {
                    w += corr;
                }
            }
        }
        w
    }
}

impl<K: Kernel + ?Sized> Kernel for MaskedKernel<'_, K> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weight(x, y) * self.base.eval(x, y)
    }
}

/// Largest `|masked(x, y) - (k - k_m)(x, y)|` over all target centers and
/// source nodes of the grid, for every level `m <= depth`.
pub fn masking_deviation<K: Kernel + ?Sized>(base: &K, quad: &Quadrature) -> f64 {
    (0..=quad.grid.depth)
        .into_par_iter()
        .map(|m| {
            let masked = masking_expectation(base, m);
            let far = truncate_far(base, m);
            let mut worst = 0.0f64;
            for x in &quad.centers {
                for cell in &quad.nodes {
                    for y in cell {
                        let lhs = masked.eval(x, y);
                        let rhs = base.eval(x, y) - far.eval(x, y);
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}
