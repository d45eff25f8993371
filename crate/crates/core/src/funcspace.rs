//! Operator-valued step functions on the dyadic grid, the finite model of
//! `M_d ⊗ L_inf([0,1)^n)` with the product trace `sum_cells vol * trace`.

use serde::{Deserialize, Serialize};

use crate::dyadic::GridSpec;
use crate::error::{Error, Result};
use crate::matalg::{self, mat_abs, singular_values, MatElem, C64};

/// A field constant on the cells of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorField {
    grid: GridSpec,
    level: u32,
    values: Vec<MatElem>,
}

impl OperatorField {
    pub fn new(grid: &GridSpec, level: u32, values: Vec<MatElem>) -> Result<Self> {
        let level = grid.check_level(level as i64)?;
        if values.len() != grid.n_cells(level) {
            return Err(Error::DimensionMismatch {
                expected: grid.n_cells(level),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| v.dim() != grid.d) {
            return Err(Error::DimensionMismatch {
                expected: grid.d,
                found: bad.dim(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            level,
            values,
        })
    }

    pub fn constant(grid: &GridSpec, level: u32, value: &MatElem) -> Result<Self> {
        Self::new(grid, level, vec![value.clone(); grid.n_cells(level)])
    }

    pub fn zeros(grid: &GridSpec, level: u32) -> Self {
        Self {
            grid: grid.clone(),
            level,
            values: vec![MatElem::zeros(grid.d); grid.n_cells(level)],
        }
    }

    pub fn identity(grid: &GridSpec, level: u32) -> Self {
        Self {
            grid: grid.clone(),
            level,
            values: vec![MatElem::identity(grid.d); grid.n_cells(level)],
        }
    }

    /// Scalar field (`d = 1`) from real cell values.
    pub fn scalar(grid: &GridSpec, level: u32, values: &[f64]) -> Result<Self> {
        if grid.d != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: grid.d,
            });
        }
        Self::new(grid, level, values.iter().map(|&v| MatElem::diag(&[v])).collect())
    }

    pub fn from_fn(grid: &GridSpec, level: u32, f: impl Fn(usize) -> MatElem) -> Result<Self> {
        Self::new(grid, level, (0..grid.n_cells(level)).map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[MatElem] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> &MatElem {
        &self.values[cell]
    }

    pub fn dim(&self) -> usize {
        self.grid.d
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.volume(self.level)
    }

    /// Value on the cell at `level` (finer than or equal to the field's level).
    pub fn value_at(&self, cell: usize, level: u32) -> &MatElem {
        &self.values[self.grid.ancestor(cell, level, self.level)]
    }

    /// The same function represented at a finer `level`.
    pub fn refine(&self, level: u32) -> Result<Self> {
        let level = self.grid.check_level(level as i64)?;
        if level < self.level {
            return Err(Error::LevelOutOfRange {
                level: level as i64,
                min: self.level as i64,
                max: self.grid.depth as i64,
            });
        }
        if level == self.level {
            return Ok(self.clone());
        }
        let values = (0..self.grid.n_cells(level))
            .map(|c| self.value_at(c, level).clone())
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            level,
            values,
        })
    }

    pub fn to_finest(&self) -> Self {
        self.refine(self.grid.depth).expect("finest level is always admissible")
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Cellwise binary operation; both operands lifted to the finer level.
    pub fn zip_with(&self, other: &Self, op: impl Fn(&MatElem, &MatElem) -> MatElem) -> Result<Self> {
        self.check_grid(other)?;
        let level = self.level.max(other.level);
        let values = (0..self.grid.n_cells(level))
            .map(|c| op(self.value_at(c, level), other.value_at(c, level)))
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            level,
            values,
        })
    }

    pub fn map(&self, op: impl Fn(&MatElem) -> MatElem) -> Self {
        Self {
            grid: self.grid.clone(),
            level: self.level,
            values: self.values.iter().map(op).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Cellwise product `self(x) * other(x)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `a * self * b`, cellwise.
    pub fn sandwich(&self, left: &Self, right: &Self) -> Result<Self> {
        left.mul(self)?.mul(right)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v.scale(c))
    }

    pub fn adjoint(&self) -> Self {
        self.map(MatElem::adjoint)
    }

    /// Right multiplication by a constant matrix.
    pub fn mul_const_right(&self, m: &MatElem) -> Self {
        self.map(|v| v * m)
    }

    pub fn mul_const_left(&self, m: &MatElem) -> Self {
        self.map(|v| m * v)
    }

    /// `sum_cells vol * trace(f_c)`.
    pub fn integral_trace(&self) -> C64 {
        let vol = self.cell_volume();
        self.values.iter().map(|v| v.trace() * vol).sum()
    }

    /// `sum_cells vol * f_c`.
    pub fn integral(&self) -> MatElem {
        let vol = self.cell_volume();
        self.values
            .iter()
            .fold(MatElem::zeros(self.dim()), |acc, v| &acc + &v.scale(vol))
    }

    /// `<a, b> = sum_cells vol * trace(a* b)`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        let prod = self.adjoint().mul(other)?;
        Ok(prod.integral_trace())
    }

    /// Largest cellwise operator norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(MatElem::op_norm).fold(0.0, f64::max)
    }

    /// Largest cellwise `|a - b|_op`.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Serializable record: `{grid, level, cells: [[[re, im]; d*d]; cells]}`.
    pub fn to_record(&self) -> FieldRecord {
        FieldRecord {
            grid: self.grid.clone(),
            level: self.level,
            cells: self
                .values
                .iter()
                .map(|v| v.row_major().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn from_record(rec: &FieldRecord) -> Result<Self> {
        rec.grid.validate()?;
        let d = rec.grid.d;
        let values = rec
            .cells
            .iter()
            .map(|cell| {
                let e: Vec<C64> = cell.iter().map(|&[re, im]| C64::new(re, im)).collect();
                MatElem::from_row_major(d, &e)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&rec.grid, rec.level, values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub grid: GridSpec,
    pub level: u32,
    pub cells: Vec<Vec<[f64; 2]>>,
}

/// `(sum_cells vol * trace |f_c|^p)^{1/p}`; `p = inf` is the largest cellwise
/// operator norm.
pub fn lp_norm(f: &OperatorField, p: f64) -> Result<f64> {
    matalg::check_exponent(p)?;
    if p.is_infinite() {
        return Ok(f.sup_norm());
    }
    let vol = f.cell_volume();
    let s: f64 = f
        .values
        .iter()
        .map(|v| vol * matalg::trace_abs_pow(v, p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `lambda_t(f) = tau(|f| > t)`: volume-weighted count of singular values
/// strictly above `t`.
pub fn distribution_lambda(f: &OperatorField, t: f64) -> f64 {
    let vol = f.cell_volume();
    f.values
        .iter()
        .map(|v| singular_values(v).iter().filter(|&&s| s > t).count() as f64 * vol)
        .sum()
}

/// `tau(|f| >= t)`, the left limit of `lambda` at `t`.
fn distribution_left(f: &OperatorField, t: f64) -> f64 {
    let vol = f.cell_volume();
    f.values
        .iter()
        .map(|v| singular_values(v).iter().filter(|&&s| s >= t).count() as f64 * vol)
        .sum()
}

/// `max_t t * lambda_{t-}(f)` over the samples. Using left limits makes every
/// sample a lower bound of `sup_t t lambda_t(f)`, with equality once the
/// samples contain every cellwise singular value (see [`weak_l1_sup`]).
pub fn weak_l1(f: &OperatorField, t_samples: &[f64]) -> Result<f64> {
    if t_samples.is_empty() {
        return Err(Error::Config("weak_l1 needs at least one threshold".into()));
    }
    if let Some(&bad) = t_samples.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Config(format!("threshold {bad} is not positive")));
    }
    Ok(t_samples
        .iter()
        .map(|&t| t * distribution_left(f, t))
        .fold(0.0, f64::max))
}

/// Exact `sup_{t>0} t lambda_t(f)`: `lambda` is a step function of `t`, so the
/// supremum is approached from the left at one of the singular values.
pub fn weak_l1_sup(f: &OperatorField) -> f64 {
    let vol = f.cell_volume();
    let mut sv: Vec<f64> = f
        .values
        .iter()
        .flat_map(singular_values)
        .filter(|&s| s > 0.0)
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let mut best = 0.0f64;
    let mut i = 0;
    while i < sv.len() {
        let s = sv[i];
        let mut j = i;
        while j < sv.len() && sv[j] == s {
            j += 1;
        }
        best = best.max(s * j as f64 * vol);
        i = j;
    }
    best
}

/// All cellwise singular values, a sample set on which [`weak_l1`] is exact.
pub fn singular_spectrum(f: &OperatorField) -> Vec<f64> {
    f.values.iter().flat_map(singular_values).filter(|&s| s > 0.0).collect()
}

/// `E_k f`: the average over each level-`k` cube.
pub fn cond_expectation(f: &OperatorField, k: u32) -> Result<OperatorField> {
    if k > f.level {
        return Err(Error::LevelOutOfRange {
            level: k as i64,
            min: 0,
            max: f.level as i64,
        });
    }
    let g = &f.grid;
    let ratio = g.n_cells(f.level) / g.n_cells(k);
    let mut sums = vec![MatElem::zeros(g.d); g.n_cells(k)];
    for (c, v) in f.values.iter().enumerate() {
        let a = g.ancestor(c, f.level, k);
        sums[a] = &sums[a] + v;
    }
    let inv = 1.0 / ratio as f64;
    OperatorField::new(g, k, sums.into_iter().map(|s| s.scale(inv)).collect())
}

/// `Delta_k f = E_k f - E_{k-1} f`, expressed at level `k`.
pub fn mart_diff(f: &OperatorField, k: u32) -> Result<OperatorField> {
    if k == 0 {
        return Err(Error::LevelOutOfRange {
            level: 0,
            min: 1,
            max: f.level as i64,
        });
    }
    let fk = cond_expectation(f, k)?;
    let fk1 = cond_expectation(f, k - 1)?;
    fk.sub(&fk1)
}

/// A finite sequence of fields on one grid.
#[derive(Clone, Debug)]
pub struct FieldSequence {
    entries: Vec<OperatorField>,
}

impl FieldSequence {
    pub fn new(entries: Vec<OperatorField>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Config("empty field sequence".into()))?;
        for e in &entries[1..] {
            first.check_grid(e)?;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[OperatorField] {
        &self.entries
    }

    fn square_function(&self, column: bool) -> Result<OperatorField> {
        let first = &self.entries[0];
        let level = self.entries.iter().map(|e| e.level).max().unwrap_or(0);
        let g = first.grid.clone();
        let values = (0..g.n_cells(level))
            .map(|c| {
                let sum = self.entries.iter().fold(MatElem::zeros(g.d), |acc, e| {
                    let x = e.value_at(c, level);
                    let sq = if column { &x.adjoint() * x } else { x * &x.adjoint() };
                    &acc + &sq
                });
                // (sum x*x)^{1/2} = |.| of the positive sum's square root
                sqrt_psd(&sum)
            })
            .collect();
        OperatorField::new(&g, level, values)
    }
}

fn sqrt_psd(a: &MatElem) -> MatElem {
    matalg::functional_calculus(&matalg::hermitize(a), |v| v.max(0.0).sqrt())
        .expect("hermitized input")
}

/// `|| (sum x_k* x_k)^{1/2} ||_p`.
pub fn seq_column_norm(x: &FieldSequence, p: f64) -> Result<f64> {
    lp_norm(&x.square_function(true)?, p)
}

/// `|| (sum x_k x_k*)^{1/2} ||_p`.
pub fn seq_row_norm(x: &FieldSequence, p: f64) -> Result<f64> {
    lp_norm(&x.square_function(false)?, p)
}

/// `max(C_p, R_p)`, defined for `p >= 2` only.
pub fn seq_rc_norm(x: &FieldSequence, p: f64) -> Result<f64> {
    if p < 2.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(seq_column_norm(x, p)?.max(seq_row_norm(x, p)?))
}

/// `|f|`, cellwise.
pub fn field_abs(f: &OperatorField) -> OperatorField {
    f.map(mat_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid1(k: u32, d: usize) -> GridSpec {
        GridSpec::new(1, k, d).unwrap()
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid1(0, 2);
        let f = OperatorField::identity(&g, 0);
        assert!((lp_norm(&f, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let g = grid1(1, 1);
        let f = OperatorField::scalar(&g, 1, &[2.0, 0.0]).unwrap();
        assert!((lp_norm(&f, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!(lp_norm(&f, 0.9).is_err());
    }

    #[test]
    fn l2_norm_is_hilbert_schmidt_sum() {
        let g = GridSpec::new(2, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&g, &mut rng, false);
        let vol = g.volume(2);
        let oracle: f64 = f.values().iter().map(|v| vol * v.hs_norm().powi(2)).sum();
        assert!((lp_norm(&f, 2.0).unwrap().powi(2) - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn lambda_examples() {
        let g = grid1(1, 1);
        let f = OperatorField::scalar(&g, 1, &[3.0, 1.0]).unwrap();
        assert_eq!(distribution_lambda(&f, 2.0), 0.5);
        assert_eq!(distribution_lambda(&f, 3.5), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridSpec::new(1, 4, 2).unwrap();
        for _ in 0..20 {
            let f = random_field(&g, &mut rng, true);
            let l1 = lp_norm(&f, 1.0).unwrap();
            for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
                assert!(t * distribution_lambda(&f, t) <= l1 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn lambda_is_non_increasing() {
        let g = GridSpec::new(1, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(&g, &mut rng, false);
        let mut spec = singular_spectrum(&f);
        spec.sort_by(f64::total_cmp);
        let mut prev = f64::INFINITY;
        for &s in &spec {
            let l = distribution_lambda(&f, s);
            assert!(l <= prev);
            // right-continuity: just above an eigenvalue the count is unchanged
            assert_eq!(distribution_lambda(&f, s + 1e-13 * s.max(1.0)), l);
            prev = l;
        }
    }

    #[test]
    fn weak_l1_examples() {
        let g = grid1(2, 2);
        let f = OperatorField::constant(&g, 2, &MatElem::scalar(2, 3.0)).unwrap();
        assert!((weak_l1_sup(&f) - 6.0).abs() < 1e-12);
        assert!((weak_l1(&f, &singular_spectrum(&f)).unwrap() - 6.0).abs() < 1e-12);
        assert!(weak_l1(&f, &[]).is_err());
        assert!(weak_l1(&f, &[0.0]).is_err());

        let g = grid1(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_field(&g, &mut rng, true);
        assert!(weak_l1_sup(&f) <= lp_norm(&f, 1.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn weak_l1_matches_exhaustive_thresholds() {
        let g = GridSpec::new(1, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let f = random_field(&g, &mut rng, false);
            // oracle: t * lambda_{t - eps} at every singular value
            let spec = singular_spectrum(&f);
            let oracle = spec
                .iter()
                .map(|&s| {
                    let t = s * (1.0 - 1e-12);
                    s * distribution_lambda(&f, t)
                })
                .fold(0.0, f64::max);
            assert!((weak_l1_sup(&f) - oracle).abs() < 1e-10 * oracle);
            assert!((weak_l1(&f, &spec).unwrap() - oracle).abs() < 1e-10 * oracle);
        }
    }

    #[test]
    fn expectation_examples() {
        let g = grid1(2, 2);
        let c = MatElem::from_real(2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = OperatorField::constant(&g, 2, &c).unwrap();
        assert_eq!(cond_expectation(&f, 1).unwrap().refine(2).unwrap(), f);
        let g = grid1(1, 1);
        let f = OperatorField::scalar(&g, 1, &[1.0, 3.0]).unwrap();
        let e0 = cond_expectation(&f, 0).unwrap();
        assert_eq!(e0.value(0), &MatElem::diag(&[2.0]));
        assert!(cond_expectation(&e0, 1).is_err());
        let d1 = mart_diff(&f, 1).unwrap();
        assert_eq!(d1.values(), &[MatElem::diag(&[-1.0]), MatElem::diag(&[1.0])]);
        assert!(mart_diff(&f, 0).is_err());
    }

    #[test]
    fn expectation_properties_on_random_fields() {
        let g = GridSpec::new(2, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(&g, &mut rng, false);
        let total = f.integral_trace();
        for k in 0..=3 {
            let fk = cond_expectation(&f, k).unwrap();
            assert!((fk.integral_trace() - total).norm() < 1e-12);
            for m in 0..=k {
                let twice = cond_expectation(&fk, m).unwrap();
                let direct = cond_expectation(&f, m).unwrap();
                assert!(twice.max_diff(&direct).unwrap() < 1e-12);
            }
            for p in [1.0, 2.0, f64::INFINITY] {
                assert!(lp_norm(&fk, p).unwrap() <= lp_norm(&f, p).unwrap() * (1.0 + 1e-10));
            }
        }
        // telescoping
        let mut sum = cond_expectation(&f, 0).unwrap().to_finest();
        for k in 1..=3 {
            sum = sum.add(&mart_diff(&f, k).unwrap()).unwrap();
        }
        assert!(sum.max_diff(&f).unwrap() < 1e-12);
        // E_{k-1} Delta_k = 0 and orthogonality
        let h = random_field(&g, &mut rng, false);
        for j in 1..=3 {
            let dj = mart_diff(&f, j).unwrap();
            assert!(cond_expectation(&dj, j - 1).unwrap().sup_norm() < 1e-12);
            for k in 1..=3 {
                if j != k {
                    let dk = mart_diff(&h, k).unwrap();
                    assert!(dj.inner(&dk).unwrap().norm() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn holder_interpolation_on_positive_fields() {
        let g = GridSpec::new(1, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let f = random_field(&g, &mut rng, true);
            let l2 = lp_norm(&f, 2.0).unwrap();
            let bound = lp_norm(&f, 1.0).unwrap() * lp_norm(&f, f64::INFINITY).unwrap();
            assert!(l2 * l2 <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sequence_norms() {
        let g = GridSpec::new(1, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_field(&g, &mut rng, false);
        let single = FieldSequence::new(vec![f.clone()]).unwrap();
        for p in [1.0, 1.5, 2.0, 4.0] {
            let l = lp_norm(&f, p).unwrap();
            assert!((seq_column_norm(&single, p).unwrap() - l).abs() < 1e-10 * l);
            assert!((seq_row_norm(&single, p).unwrap() - l).abs() < 1e-10 * l);
        }
        let h = random_field(&g, &mut rng, false);
        let seq = FieldSequence::new(vec![f.clone(), h.clone()]).unwrap();
        let l2 = (lp_norm(&f, 2.0).unwrap().powi(2) + lp_norm(&h, 2.0).unwrap().powi(2)).sqrt();
        assert!((seq_column_norm(&seq, 2.0).unwrap() - l2).abs() < 1e-10 * l2);
        assert!((seq_row_norm(&seq, 2.0).unwrap() - l2).abs() < 1e-10 * l2);
        assert!((seq_rc_norm(&seq, 2.0).unwrap() - l2).abs() < 1e-10 * l2);
        assert!(seq_rc_norm(&seq, 1.5).is_err());
        assert!(FieldSequence::new(vec![]).is_err());
    }

    #[test]
    fn row_of_matrix_units_column_norm() {
        // x_k = g_k ⊗ e_{1,k}: column square function is diag(|g_k|)
        let m = 3;
        let g = GridSpec::new(1, 2, m).unwrap();
        let gk = [[1.0, 2.0, 0.5, 0.0], [0.3, 0.0, 1.0, 2.0], [1.0, 1.0, 1.0, 1.0]];
        let seq: Vec<OperatorField> = (0..m)
            .map(|k| {
                OperatorField::from_fn(&g, 2, |c| {
                    let mut e = vec![0.0; m * m];
                    e[k] = gk[k][c];
                    MatElem::from_real(m, &e).unwrap()
                })
                .unwrap()
            })
            .collect();
        let seq = FieldSequence::new(seq).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let expect: f64 = (0..4)
                .map(|c| 0.25 * (0..m).map(|k| f64::powf(gk[k][c], p)).sum::<f64>())
                .sum::<f64>()
                .powf(1.0 / p);
            assert!((seq_column_norm(&seq, p).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn json_roundtrip() {
        let g = GridSpec::new(2, 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(&g, &mut rng, false);
        let back = OperatorField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert!(OperatorField::from_json("{\"grid\": 3}").is_err());
    }

    #[test]
    fn refine_and_grid_checks() {
        let g = grid1(2, 1);
        let f = OperatorField::scalar(&g, 1, &[1.0, 2.0]).unwrap();
        let r = f.refine(2).unwrap();
        assert_eq!(r.values().len(), 4);
        assert!(r.refine(1).is_err());
        let other = OperatorField::zeros(&grid1(3, 1), 1);
        assert!(matches!(f.add(&other), Err(Error::GridMismatch(_))));
    }
}
