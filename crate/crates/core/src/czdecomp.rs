//! Good/bad decomposition of a positive field relative to its Cuculescu
//! projections, the dilated-support projection `zeta`, and the cancellation
//! identities of the bad part.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{check_dilation, dilation_neighbours};
use crate::error::{Error, Result};
use crate::funcspace::{lp_norm, OperatorField};
use crate::martingale::{CuculescuFamily, MartingaleSeq};
use crate::matalg::{hermitize, proj_join, MatElem, ProjectionElem};

/// Increment index: a finite level `1..=K` or the terminal index, for which
/// `p_inf = q` and `f_inf = f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Ix {
    Fin(u32),
    Inf,
}

impl Ix {
    /// `i ∨ j`.
    pub fn join(self, other: Ix) -> Ix {
        self.max(other)
    }
}

#[derive(Clone, Debug)]
pub struct GoodBadParts {
    pub g: OperatorField,
    pub b: OperatorField,
    /// Nonzero `b_ij` for finite `i, j`; every pair involving `Inf` vanishes.
    pub b_ij: BTreeMap<(u32, u32), OperatorField>,
    pub g_d: OperatorField,
    pub g_l: OperatorField,
    pub g_r: OperatorField,
    /// `g_s^(l) = sum_k p_k df_{k+s} q_{k+s-1}` for `s = 1..K-1`.
    pub g_l_s: BTreeMap<u32, OperatorField>,
}

/// Per-finest-cell values of `p_i` for `i = 1..=K` followed by `p_inf`.
fn increments_at(fam: &CuculescuFamily, c: usize) -> Vec<&MatElem> {
    let k = fam.depth();
    let mut v: Vec<&MatElem> = (1..=k).map(|n| fam.p(n).value_at(c, k)).collect();
    v.push(fam.q_final().value(c));
    v
}

pub fn good_bad(m: &MartingaleSeq, fam: &CuculescuFamily) -> Result<GoodBadParts> {
    let f = m.source();
    if f.grid() != fam.q_final().grid() {
        return Err(Error::GridMismatch(
            "martingale and Cuculescu family live on different grids".into(),
        ));
    }
    let grid = f.grid().clone();
    let kk = grid.depth;
    let d = grid.d;
    let idx = |a: usize| if a < kk as usize { Ix::Fin(a as u32 + 1) } else { Ix::Inf };
    let active: Vec<u32> = fam.active_levels();

    struct Cell {
        g_d: MatElem,
        g_l: MatElem,
        g_r: MatElem,
        b: Vec<MatElem>,
    }
    let pairs: Vec<(u32, u32)> = active
        .iter()
        .flat_map(|&i| active.iter().map(move |&j| (i, j)))
        .collect();

    let cells: Vec<Cell> = (0..grid.n_finest())
        .into_par_iter()
        .map(|c| {
            let ps = increments_at(fam, c);
            let fval = |ix: Ix| match ix {
                Ix::Fin(n) => m.level(n).value_at(c, kk),
                Ix::Inf => f.value(c),
            };
            let mut g_d = MatElem::zeros(d);
            let mut g_l = MatElem::zeros(d);
            let mut g_r = MatElem::zeros(d);
            for a in 0..ps.len() {
                for b in 0..ps.len() {
                    let (i, j) = (idx(a), idx(b));
                    let term = &(ps[a] * fval(i.join(j))) * ps[b];
                    match a.cmp(&b) {
                        std::cmp::Ordering::Equal => g_d = &g_d + &term,
                        std::cmp::Ordering::Less => g_l = &g_l + &term,
                        std::cmp::Ordering::Greater => g_r = &g_r + &term,
                    }
                }
            }
            let b = pairs
                .iter()
                .map(|&(i, j)| {
                    let fij = m.level(i.max(j)).value_at(c, kk);
                    let diff = f.value(c) - fij;
                    &(ps[i as usize - 1] * &diff) * ps[j as usize - 1]
                })
                .collect();
            Cell { g_d, g_l, g_r, b }
        })
        .collect();

    let field = |vals: Vec<MatElem>| OperatorField::new(&grid, kk, vals);
    let g_d = field(cells.iter().map(|c| hermitize(&c.g_d)).collect())?;
    let g_l = field(cells.iter().map(|c| c.g_l.clone()).collect())?;
    let g_r = field(cells.iter().map(|c| c.g_r.clone()).collect())?;
    let mut b_ij = BTreeMap::new();
    for (n, &pair) in pairs.iter().enumerate() {
        let bf = field(cells.iter().map(|c| c.b[n].clone()).collect())?;
        if bf.sup_norm() > 0.0 {
            b_ij.insert(pair, bf);
        }
    }
    let g = g_d.add(&g_l)?.add(&g_r)?;
    let b = f.sub(&g)?;
    let g_l_s = (1..kk).map(|s| Ok((s, shifted_column(m, fam, s)?))).collect::<Result<_>>()?;
    Ok(GoodBadParts {
        g,
        b,
        b_ij,
        g_d,
        g_l,
        g_r,
        g_l_s,
    })
}

/// `g_{s,k}^(l) = p_k df_{k+s} q_{k+s-1}` at level `k + s`.
pub fn shifted_term(m: &MartingaleSeq, fam: &CuculescuFamily, s: u32, k: u32) -> Result<OperatorField> {
    let lvl = k + s;
    let df = m.diff(lvl);
    let pk = fam.p(k).refine(lvl)?;
    let q = fam.q(lvl - 1).refine(lvl)?;
    pk.mul(&df)?.mul(&q)
}

/// `g_s^(l) = sum_{k >= 1, k + s <= K} p_k df_{k+s} q_{k+s-1}` at the finest level.
pub fn shifted_column(m: &MartingaleSeq, fam: &CuculescuFamily, s: u32) -> Result<OperatorField> {
    let grid = m.source().grid();
    let kk = grid.depth;
    let mut acc = OperatorField::zeros(grid, kk);
    for k in 1..=kk.saturating_sub(s) {
        if s == 0 {
            break;
        }
        acc = acc.add(&shifted_term(m, fam, s, k)?)?;
    }
    Ok(acc)
}

/// `zeta_d = (join over cubes Q of p_Q 1_{dQ})^perp` at the finest level.
#[derive(Clone, Debug)]
pub struct ZetaProjection {
    pub d_param: u32,
    pub zeta: OperatorField,
}

pub fn zeta(fam: &CuculescuFamily, d_param: u32) -> Result<ZetaProjection> {
    let levels: Vec<(u32, &OperatorField)> = fam.active_levels().into_iter().map(|k| (k, fam.p(k))).collect();
    let join = dilated_join(fam.q_final().grid(), &levels, d_param)?;
    let zeta = join.map(|v| &MatElem::identity(v.dim()) - v);
    Ok(ZetaProjection { d_param, zeta })
}

/// `x -> join over (k, Q) with x in dQ of A_Q`, for projection-valued fields
/// `A` given at their own levels; the result lives at the finest level.
pub fn dilated_join(
    grid: &crate::dyadic::GridSpec,
    levels: &[(u32, &OperatorField)],
    d_param: u32,
) -> Result<OperatorField> {
    check_dilation(d_param)?;
    let kk = grid.depth;
    let dim = grid.d;
    let projs: Vec<Vec<ProjectionElem>> = levels
        .iter()
        .map(|(_, f)| {
            f.values()
                .iter()
                .map(|v| ProjectionElem::from_constructed(v.clone()))
                .collect()
        })
        .collect();
    let vals: Vec<Result<MatElem>> = (0..grid.n_finest())
        .into_par_iter()
        .map(|c| {
            let mut members: Vec<&ProjectionElem> = Vec::new();
            for (li, &(k, _)) in levels.iter().enumerate() {
                let anc = grid.ancestor(c, kk, k);
                let idx = grid.multi_index(anc, k);
                for q in dilation_neighbours(grid, &idx, k, d_param) {
                    let p = &projs[li][q];
                    if p.rank() > 0.5 {
                        members.push(p);
                    }
                }
            }
            Ok(proj_join(dim, &members)?.into_mat())
        })
        .collect();
    OperatorField::new(grid, kk, vals.into_iter().collect::<Result<_>>()?)
}

impl ZetaProjection {
    /// `(tau ⊗ ∫)(1 - zeta)`.
    pub fn trace_perp(&self) -> f64 {
        self.zeta.dim() as f64 - self.zeta.integral_trace().re
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ZetaReport {
    /// Largest `|zeta(x) p_Q|` over `x in dQ`.
    pub cancellation: f64,
    pub trace_perp: f64,
    pub trace_bound: f64,
}

impl ZetaReport {
    pub fn passes(&self) -> bool {
        self.cancellation <= 1e-8 && self.trace_perp <= self.trace_bound + 1e-8
    }
}

pub fn check_zeta(m: &MartingaleSeq, fam: &CuculescuFamily, z: &ZetaProjection) -> ZetaReport {
    let grid = z.zeta.grid();
    let kk = grid.depth;
    let mut cancellation = 0.0f64;
    for k in fam.active_levels() {
        for c in 0..grid.n_finest() {
            let idx = grid.multi_index(grid.ancestor(c, kk, k), k);
            for q in dilation_neighbours(grid, &idx, k, z.d_param) {
                let p = fam.p(k).value(q);
                let zc = z.zeta.value(c);
                cancellation = cancellation.max((zc * p).op_norm()).max((p * zc).op_norm());
            }
        }
    }
    let l1 = lp_norm(m.source(), 1.0).expect("p = 1");
    ZetaReport {
        cancellation,
        trace_perp: z.trace_perp(),
        trace_bound: (z.d_param as f64).powi(grid.n as i32) * l1 / fam.threshold(),
    }
}

/// Worst violations of the anatomy of the decomposition.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DecompReport {
    /// `|f - g - b|_1`, relative to `1 + |f|_1`.
    pub additivity: f64,
    /// `|g - g_d - g_l - g_r|_1` and `|b - sum b_ij|_1`.
    pub good_split: f64,
    pub bad_split: f64,
    /// `| |g_d|_1 - |f|_1 |` and largest negative eigenvalue of `g_d`.
    pub gd_trace: f64,
    pub gd_positivity: f64,
    /// `|g_d|_inf` against `2^n t`.
    pub gd_sup: f64,
    pub gd_sup_bound: f64,
    /// Largest `sum_{i-j=s} |b_ij|_1 / |f|_1`.
    pub bad_diagonal_ratio: f64,
    /// Worst `|∫_Q b_ij|` over cubes at level `i ∨ j`.
    pub bij_mean: f64,
    /// Worst `|zeta(x) b_ij(y) zeta(x)|` over `y in 5 Q_{x, i ∧ j}`.
    pub zeta_bij: f64,
    /// `|g_l - sum_s g_s^(l)|_2` relative to `1 + |f|_2`.
    pub abel: f64,
    /// Worst `|Delta_{k+s} g_s^(l) - g_{s,k}^(l)|_2`.
    pub shifted_diff: f64,
    /// Largest `|g_s^(l)|_2^2 / (t |f|_1)`.
    pub shifted_l2_constant: f64,
}

impl DecompReport {
    pub fn passes(&self) -> bool {
        self.additivity <= 1e-10
            && self.good_split <= 1e-10
            && self.bad_split <= 1e-10
            && self.gd_trace <= 1e-10
            && self.gd_positivity <= 1e-10
            && self.gd_sup <= self.gd_sup_bound * (1.0 + 1e-8)
            && self.bad_diagonal_ratio <= 2.0 * (1.0 + 1e-8)
            && self.bij_mean <= 1e-9
            && self.zeta_bij <= 1e-8
            && self.abel <= 1e-8
            && self.shifted_diff <= 1e-8
    }
}

/// Worst `|sum_{cells ⊆ Q} vol b_ij|` over finite pairs and cubes `Q` at
/// level `i ∨ j`, relative to `1 + |f|_1`.
pub fn bij_mean_zero_check(parts: &GoodBadParts, f_l1: f64) -> f64 {
    let mut worst = 0.0f64;
    for (&(i, j), b) in &parts.b_ij {
        let lvl = i.max(j);
        let avg = crate::funcspace::cond_expectation(b, lvl).expect("lvl <= depth");
        let vol = b.grid().volume(lvl);
        worst = worst.max(avg.sup_norm() * vol);
    }
    worst / (1.0 + f_l1)
}

/// `|g_l - sum_s g_s^(l)|_2 / (1 + |f|_2)` and the largest
/// `|Delta_{k+s} g_s^(l) - g_{s,k}^(l)|_2`.
pub fn gl_shift_form(
    m: &MartingaleSeq,
    fam: &CuculescuFamily,
    parts: &GoodBadParts,
) -> Result<(f64, f64)> {
    let grid = m.source().grid();
    let kk = grid.depth;
    let mut sum = OperatorField::zeros(grid, kk);
    let mut worst_diff = 0.0f64;
    for (&s, col) in &parts.g_l_s {
        sum = sum.add(col)?;
        for k in 1..=kk - s {
            let d = crate::funcspace::mart_diff(col, k + s)?;
            let term = shifted_term(m, fam, s, k)?;
            worst_diff = worst_diff.max(lp_norm(&d.sub(&term)?, 2.0)?);
        }
    }
    let err = lp_norm(&parts.g_l.sub(&sum)?, 2.0)?;
    Ok((err / (1.0 + lp_norm(m.source(), 2.0)?), worst_diff))
}

pub fn check_decomposition(
    m: &MartingaleSeq,
    fam: &CuculescuFamily,
    parts: &GoodBadParts,
    z: &ZetaProjection,
) -> Result<DecompReport> {
    let f = m.source();
    let grid = f.grid();
    let kk = grid.depth;
    let l1 = lp_norm(f, 1.0)?;
    let rel = 1.0 + l1;
    let t = fam.threshold();
    let mut r = DecompReport {
        additivity: lp_norm(&f.sub(&parts.g.add(&parts.b)?)?, 1.0)? / rel,
        ..Default::default()
    };
    let split = parts.g_d.add(&parts.g_l)?.add(&parts.g_r)?;
    r.good_split = lp_norm(&parts.g.sub(&split)?, 1.0)? / rel;
    let mut bsum = OperatorField::zeros(grid, kk);
    for b in parts.b_ij.values() {
        bsum = bsum.add(b)?;
    }
    r.bad_split = lp_norm(&parts.b.sub(&bsum)?, 1.0)? / rel;
    r.gd_trace = (lp_norm(&parts.g_d, 1.0)? - l1).abs() / rel;
    r.gd_positivity = parts
        .g_d
        .values()
        .iter()
        .map(|v| (-v.lambda_min()).max(0.0))
        .fold(0.0, f64::max);
    r.gd_sup = parts.g_d.sup_norm();
    r.gd_sup_bound = (1u64 << grid.n) as f64 * t;

    let mut by_diag: BTreeMap<i64, f64> = BTreeMap::new();
    for (&(i, j), b) in &parts.b_ij {
        *by_diag.entry(i as i64 - j as i64).or_default() += lp_norm(b, 1.0)?;
    }
    r.bad_diagonal_ratio = by_diag.values().fold(0.0f64, |a, &v| a.max(v)) / l1.max(f64::MIN_POSITIVE);
    r.bij_mean = bij_mean_zero_check(parts, l1);

    for (&(i, j), b) in &parts.b_ij {
        let lvl = i.min(j);
        for x in 0..grid.n_finest() {
            let zx = z.zeta.value(x);
            let idx = grid.multi_index(grid.ancestor(x, kk, lvl), lvl);
            for q in dilation_neighbours(grid, &idx, lvl, 5) {
                let first = q << (grid.n as u32 * (kk - lvl));
                let count = 1usize << (grid.n as u32 * (kk - lvl));
                if grid.n == 1 {
                    for y in first..first + count {
                        let v = &(zx * b.value(y)) * zx;
                        r.zeta_bij = r.zeta_bij.max(v.op_norm());
                    }
                } else {
                    for y in 0..grid.n_finest() {
                        if grid.ancestor(y, kk, lvl) == q {
                            let v = &(zx * b.value(y)) * zx;
                            r.zeta_bij = r.zeta_bij.max(v.op_norm());
                        }
                    }
                }
            }
        }
    }
    let (abel, diff) = gl_shift_form(m, fam, parts)?;
    r.abel = abel;
    r.shifted_diff = diff;
    r.shifted_l2_constant = parts
        .g_l_s
        .values()
        .map(|g| lp_norm(g, 2.0).map(|v| v * v / (t * l1)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::GridSpec;
    use crate::martingale::{build_martingale, cuculescu};
    use crate::random::{member_rng, random_positive_unit};

    fn scalar(k: u32, vals: &[f64]) -> OperatorField {
        let g = GridSpec::new(1, k, 1).unwrap();
        OperatorField::scalar(&g, k, vals).unwrap()
    }

    fn re(f: &OperatorField) -> Vec<f64> {
        f.values().iter().map(|v| v.get(0, 0).re).collect()
    }

    fn pipeline(f: &OperatorField, t: f64) -> (MartingaleSeq, CuculescuFamily, GoodBadParts, ZetaProjection) {
        let m = build_martingale(f);
        let fam = cuculescu(&m, t).unwrap();
        let parts = good_bad(&m, &fam).unwrap();
        let z = zeta(&fam, 5).unwrap();
        (m, fam, parts, z)
    }

    #[test]
    fn hand_example() {
        let f = scalar(2, &[4.0, 0.0, 0.0, 0.0]);
        let (m, fam, parts, z) = pipeline(&f, 1.5);
        assert_eq!(re(&parts.g), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(re(&parts.b), vec![2.0, -2.0, 0.0, 0.0]);
        assert_eq!(re(&parts.b_ij[&(1, 1)]), vec![2.0, -2.0, 0.0, 0.0]);
        assert_eq!(re(&z.zeta), vec![0.0; 4]);
        assert_eq!(z.trace_perp(), 1.0);
        let rep = check_decomposition(&m, &fam, &parts, &z).unwrap();
        assert!(rep.passes(), "{rep:?}");
        assert!(check_zeta(&m, &fam, &z).passes());
    }

    #[test]
    fn below_threshold_has_no_bad_part() {
        let f = scalar(3, &[0.5, 1.0, 0.2, 0.9, 0.0, 0.3, 1.0, 0.7]);
        let (_, _, parts, z) = pipeline(&f, 2.0);
        assert!(parts.b.sup_norm() == 0.0);
        assert!(parts.b_ij.is_empty());
        assert!(parts.g.max_diff(&f).unwrap() == 0.0);
        assert_eq!(re(&z.zeta), vec![1.0; 8]);
    }

    #[test]
    fn index_order() {
        assert!(Ix::Fin(3) < Ix::Inf);
        assert_eq!(Ix::Fin(2).join(Ix::Fin(5)), Ix::Fin(5));
        assert_eq!(Ix::Fin(2).join(Ix::Inf), Ix::Inf);
        let g = GridSpec::new(1, 2, 1).unwrap();
        let fam = cuculescu(&build_martingale(&OperatorField::zeros(&g, 2)), 1.0).unwrap();
        assert!(zeta(&fam, 4).is_err());
    }

    #[test]
    fn random_matrix_decompositions() {
        for (seed, (n, k, d)) in [(1usize, 5u32, 2usize), (1, 6, 3), (2, 3, 2)].into_iter().enumerate() {
            let g = GridSpec::new(n, k, d).unwrap();
            for member in 0..4 {
                let f = random_positive_unit(&g, &mut member_rng(seed as u64 + 40, member));
                let (m, fam, parts, z) = pipeline(&f, 1.5 * d as f64);
                let rep = check_decomposition(&m, &fam, &parts, &z).unwrap();
                assert!(rep.passes(), "{rep:?}");
                assert!(check_zeta(&m, &fam, &z).passes());
            }
        }
    }
}
