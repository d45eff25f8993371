//! Truncated dyadic lattice on `[0,1)^n` with the sup-norm.
//!
//! Cells at level `k` have edge `2^-k` and are enumerated in row-major order
//! of their integer index vectors (first coordinate slowest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEPTH: u32 = 24;
pub const DEFAULT_CELL_BUDGET: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension.
    pub n: usize,
    /// Finest level; finest cells have edge `2^-depth`.
    pub depth: u32,
    /// Matrix dimension of field values.
    pub d: usize,
    /// Sub-samples per cell edge for quadrature.
    #[serde(default = "default_refine")]
    pub quad_refine: usize,
    #[serde(default = "default_budget")]
    pub cell_budget: usize,
}

fn default_refine() -> usize {
    4
}

fn default_budget() -> usize {
    DEFAULT_CELL_BUDGET
}

impl GridSpec {
    pub fn new(n: usize, depth: u32, d: usize) -> Result<Self> {
        let g = Self {
            n,
            depth,
            d,
            quad_refine: default_refine(),
            cell_budget: DEFAULT_CELL_BUDGET,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_refine(mut self, quad_refine: usize) -> Result<Self> {
        self.quad_refine = quad_refine;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, cell_budget: usize) -> Result<Self> {
        self.cell_budget = cell_budget;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidGrid("spatial dimension n must be >= 1".into()));
        }
        if self.depth > MAX_DEPTH {
            return Err(Error::InvalidGrid(format!(
                "depth {} exceeds {MAX_DEPTH}",
                self.depth
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidGrid("matrix dimension d must be >= 1".into()));
        }
        if self.quad_refine == 0 {
            return Err(Error::InvalidGrid("quad_refine must be >= 1".into()));
        }
        let bits = self.n as u64 * self.depth as u64;
        if bits >= 63 || (1usize << bits) > self.cell_budget {
            return Err(Error::InvalidGrid(format!(
                "2^(n*K) = 2^{bits} cells exceeds the budget of {}",
                self.cell_budget
            )));
        }
        Ok(())
    }

    /// Number of cells at `level`.
    pub fn n_cells(&self, level: u32) -> usize {
        1usize << (self.n as u32 * level)
    }

    pub fn n_finest(&self) -> usize {
        self.n_cells(self.depth)
    }

    /// `V_k = 2^{-nk}`.
    pub fn volume(&self, level: u32) -> f64 {
        (-((self.n as u32 * level) as f64)).exp2()
    }

    pub fn edge(level: u32) -> f64 {
        (-(level as f64)).exp2()
    }

    pub fn check_level(&self, level: i64) -> Result<u32> {
        if level < 0 || level > self.depth as i64 {
            return Err(Error::LevelOutOfRange {
                level,
                min: 0,
                max: self.depth as i64,
            });
        }
        Ok(level as u32)
    }

    /// Multi-index of the flat cell `flat` at `level`.
    pub fn multi_index(&self, flat: usize, level: u32) -> Vec<u64> {
        let side_bits = level;
        let mask = (1usize << side_bits) - 1;
        let mut idx = vec![0u64; self.n];
        for (j, slot) in idx.iter_mut().enumerate() {
            let shift = side_bits as usize * (self.n - 1 - j);
            *slot = ((flat >> shift) & mask) as u64;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[u64], level: u32) -> usize {
        idx.iter()
            .fold(0usize, |acc, &i| (acc << level) | i as usize)
    }

    /// Flat index at `coarse` of the ancestor of the flat cell `flat` at `fine`.
    pub fn ancestor(&self, flat: usize, fine: u32, coarse: u32) -> usize {
        debug_assert!(coarse <= fine);
        if self.n == 1 {
            return flat >> (fine - coarse);
        }
        let idx = self.multi_index(flat, fine);
        let shifted: Vec<u64> = idx.iter().map(|&i| i >> (fine - coarse)).collect();
        self.flat_index(&shifted, coarse)
    }

    /// Ancestor map from every finest cell to its level-`k` cube.
    pub fn ancestor_table(&self, k: u32) -> Vec<usize> {
        (0..self.n_finest())
            .map(|c| self.ancestor(c, self.depth, k))
            .collect()
    }

    pub fn cube(&self, flat: usize, level: u32) -> DyadicCube {
        DyadicCube {
            level,
            index: self.multi_index(flat, level),
        }
    }

    /// Centers of all cells at `level`, row-major.
    pub fn centers(&self, level: u32) -> Vec<Vec<f64>> {
        (0..self.n_cells(level))
            .map(|c| self.cube(c, level).center())
            .collect()
    }

    /// Quadrature nodes of a finest cell: `quad_refine^n` midpoints.
    pub fn subsample_points(&self, flat: usize) -> Vec<Vec<f64>> {
        let q = self.cube(flat, self.depth);
        let r = self.quad_refine;
        let h = GridSpec::edge(self.depth) / r as f64;
        let lower = q.lower();
        let total = r.pow(self.n as u32);
        (0..total)
            .map(|mut s| {
                let mut pt = vec![0.0; self.n];
                for j in (0..self.n).rev() {
                    let o = s % r;
                    s /= r;
                    pt[j] = lower[j] + (o as f64 + 0.5) * h;
                }
                pt
            })
            .collect()
    }
}

/// `Q = prod_i [index_i 2^-k, (index_i + 1) 2^-k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<u64>,
}

impl DyadicCube {
    pub fn unit(n: usize) -> Self {
        Self {
            level: 0,
            index: vec![0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn edge(&self) -> f64 {
        GridSpec::edge(self.level)
    }

    pub fn volume(&self) -> f64 {
        self.edge().powi(self.dim() as i32)
    }

    pub fn lower(&self) -> Vec<f64> {
        let e = self.edge();
        self.index.iter().map(|&i| i as f64 * e).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let e = self.edge();
        self.index.iter().map(|&i| (i as f64 + 0.5) * e).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let e = self.edge();
        self.index
            .iter()
            .zip(x)
            .all(|(&i, &xi)| xi >= i as f64 * e && xi < (i + 1) as f64 * e)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self {
            level: self.level - 1,
            index: self.index.iter().map(|&i| i >> 1).collect(),
        })
    }

    /// True iff `self` is contained in `other`.
    pub fn is_within(&self, other: &Self) -> bool {
        self.level >= other.level
            && self
                .index
                .iter()
                .zip(&other.index)
                .all(|(&a, &b)| a >> (self.level - other.level) == b)
    }
}

fn in_domain(x: &[f64]) -> bool {
    x.iter().all(|&v| (0.0..1.0).contains(&v))
}

/// `Q_{x,k}`, the level-`k` cube containing `x`.
pub fn cube_of(x: &[f64], k: u32) -> Result<DyadicCube> {
    if !in_domain(x) {
        return Err(Error::OutsideDomain(x.to_vec()));
    }
    if k > MAX_DEPTH {
        return Err(Error::LevelOutOfRange {
            level: k as i64,
            min: 0,
            max: MAX_DEPTH as i64,
        });
    }
    let scale = (k as f64).exp2();
    Ok(DyadicCube {
        level: k,
        index: x.iter().map(|&v| (v * scale).floor() as u64).collect(),
    })
}

pub fn center(q: &DyadicCube) -> Vec<f64> {
    q.center()
}

/// Membership of `x` in `iQ`, the union of the `i^n` level-`k` cubes
/// concentric with `Q`. Cubes are half-open, so this is an integer test on
/// cube indices; it is clipped to the domain for free.
pub fn in_dilated(x: &[f64], q: &DyadicCube, i: u32) -> Result<bool> {
    check_dilation(i)?;
    let qx = cube_of(x, q.level)?;
    Ok(indices_within(&qx.index, &q.index, i))
}

pub(crate) fn check_dilation(i: u32) -> Result<()> {
    if i == 0 || i % 2 == 0 {
        return Err(Error::EvenDilation(i));
    }
    Ok(())
}

/// `|a - b|_inf <= (i - 1) / 2` on integer cube indices.
pub fn indices_within(a: &[u64], b: &[u64], i: u32) -> bool {
    let r = ((i - 1) / 2) as u64;
    a.iter().zip(b).all(|(&x, &y)| x.abs_diff(y) <= r)
}

/// All `2^{nk}` cubes at level `k`, row-major.
pub fn cells(g: &GridSpec, k: u32) -> Result<Vec<DyadicCube>> {
    let k = g.check_level(k as i64)?;
    Ok((0..g.n_cells(k)).map(|c| g.cube(c, k)).collect())
}

/// Level-`k` cube indices `Q` with `x`'s cell in `iQ`, i.e. the cubes whose
/// `i`-dilation covers the level-`k` cell `center_idx`, clipped to the domain.
pub fn dilation_neighbours(g: &GridSpec, center_idx: &[u64], k: u32, i: u32) -> Vec<usize> {
    let r = ((i - 1) / 2) as i64;
    let side = 1i64 << k;
    let mut out = Vec::new();
    let mut offset = vec![-r; g.n];
    loop {
        let mut idx = Vec::with_capacity(g.n);
        let mut ok = true;
        for (j, &o) in offset.iter().enumerate() {
            let v = center_idx[j] as i64 + o;
            if v < 0 || v >= side {
                ok = false;
                break;
            }
            idx.push(v as u64);
        }
        if ok {
            out.push(g.flat_index(&idx, k));
        }
        let mut j = g.n;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            offset[j] += 1;
            if offset[j] <= r {
                break;
            }
            offset[j] = -r;
        }
    }
}

/// Sup-norm distance.
pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
