//! Scalar Calderon-Zygmund kernels, their smoothness and size predicates,
//! and the truncations used to localise an operator at a dyadic scale.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{sup_dist, GridSpec};
use crate::error::{Error, Result};

/// A real scalar kernel `k(x, y)` on `R^n x R^n`, evaluated off the diagonal.
pub trait Kernel: Send + Sync {
    fn n(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
}

/// Kernel selection as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum KernelSpec {
    Hilbert,
    Power { n: usize, gamma: f64 },
    Zero { n: usize },
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelModel> {
        match *self {
            KernelSpec::Hilbert => builtin_hilbert(1),
            KernelSpec::Power { n, gamma } => builtin_power(n, gamma),
            KernelSpec::Zero { n } => builtin_zero(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Hilbert,
    /// `c sign(x - y) / |x - y|` for `n = 1`, `c (x_1 - y_1) / |x - y|^{n+1}` otherwise.
    Odd { c: f64 },
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    pub spec: KernelSpec,
    pub n: usize,
    pub gamma: f64,
    shape: Shape,
}

/// `k(x, y) = 1 / (2 (x - y))`, Lipschitz parameter 1.
pub fn builtin_hilbert(n: usize) -> Result<KernelModel> {
    if n != 1 {
        return Err(Error::InvalidKernel(format!(
            "the Hilbert kernel is one-dimensional, got n = {n}"
        )));
    }
    Ok(KernelModel {
        spec: KernelSpec::Hilbert,
        n: 1,
        gamma: 1.0,
        shape: Shape::Hilbert,
    })
}

/// Odd kernel homogeneous of degree `-n`, scaled so that both predicates hold
/// with parameter `gamma`.
pub fn builtin_power(n: usize, gamma: f64) -> Result<KernelModel> {
    if n == 0 {
        return Err(Error::InvalidKernel("n must be positive".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidKernel(format!("gamma = {gamma} outside (0, 1]")));
    }
    let c = if n == 1 {
        2f64.powf(-gamma)
    } else {
        1.0 / ((n as f64 + 2.0) * 2f64.powf(n as f64 + gamma))
    };
    Ok(KernelModel {
        spec: KernelSpec::Power { n, gamma },
        n,
        gamma,
        shape: Shape::Odd { c },
    })
}

pub fn builtin_zero(n: usize) -> Result<KernelModel> {
    if n == 0 {
        return Err(Error::InvalidKernel("n must be positive".into()));
    }
    Ok(KernelModel {
        spec: KernelSpec::Zero { n },
        n,
        gamma: 1.0,
        shape: Shape::Zero,
    })
}

impl Kernel for KernelModel {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.shape {
            Shape::Hilbert => 0.5 / (x[0] - y[0]),
            Shape::Odd { c } => {
                if self.n == 1 {
                    c / (x[0] - y[0])
                } else {
                    let r = sup_dist(x, y);
                    c * (x[0] - y[0]) / r.powi(self.n as i32 + 1)
                }
            }
            Shape::Zero => 0.0,
        }
    }
}

/// Worst ratios of the two sides of the smoothness and size inequalities over
/// random samples; a kernel satisfies a predicate when its ratio is `<= 1`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PredicateReport {
    pub smooth_first: f64,
    pub smooth_second: f64,
    pub size: f64,
    pub samples: usize,
}

impl PredicateReport {
    pub fn passes(&self) -> bool {
        self.smooth_first <= 1.0 + 1e-9 && self.smooth_second <= 1.0 + 1e-9 && self.size <= 1.0 + 1e-9
    }
}

fn random_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Samples triples `|x - z| <= |y - z| / 2` (a quarter of them on the
/// boundary of the admissible region) and pairs `x != y`.
pub fn check_predicates<K: Kernel + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    gamma: f64,
    samples: usize,
    rng: &mut R,
) -> PredicateReport {
    let n = kernel.n();
    let mut r = PredicateReport {
        samples,
        ..Default::default()
    };
    let mut done = 0;
    while done < samples {
        let y = random_point(n, rng);
        let z = random_point(n, rng);
        let dyz = sup_dist(&y, &z);
        if dyz < 1e-6 {
            continue;
        }
        let rho: f64 = if done % 4 == 0 { 1.0 } else { rng.gen_range(0.0..1.0) };
        let radius = 0.5 * dyz * rho;
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|v| *v *= radius / norm);
        let x: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + b).collect();
        let dxz = sup_dist(&x, &z);
        if dxz == 0.0 {
            continue;
        }
        let bound = dxz.powf(gamma) / dyz.powf(n as f64 + gamma);
        let first = (kernel.eval(&x, &y) - kernel.eval(&z, &y)).abs() / bound;
        let second = (kernel.eval(&y, &x) - kernel.eval(&y, &z)).abs() / bound;
        r.smooth_first = r.smooth_first.max(first);
        r.smooth_second = r.smooth_second.max(second);
        let a = random_point(n, rng);
        let b = random_point(n, rng);
        let dab = sup_dist(&a, &b);
        if dab > 0.0 {
            r.size = r.size.max(kernel.eval(&a, &b).abs() * dab.powi(n as i32));
        }
        done += 1;
    }
    r
}

/// Integer cube index of `x` at level `k` (no domain check).
fn level_index(x: f64, k: u32) -> i64 {
    (x * (1u64 << k) as f64).floor() as i64
}

/// Sup-distance between the level-`k` cube indices of `x` and `y`.
pub fn cube_gap(x: &[f64], y: &[f64], k: u32) -> i64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (level_index(a, k) - level_index(b, k)).abs())
        .max()
        .unwrap_or(0)
}

/// `x in 5 Q_{y,k}`.
pub fn in_five_cube(x: &[f64], y: &[f64], k: u32) -> bool {
    cube_gap(x, y, k) <= 2
}

/// The pair region `5Q_{y,k} \ 3Q_{y,k}` carrying the mean-zero correction.
pub fn in_annulus(x: &[f64], y: &[f64], k: u32) -> bool {
    cube_gap(x, y, k) == 2
}

/// Center of the level-`k` cube containing `y`.
pub fn cube_center(y: &[f64], k: u32) -> Vec<f64> {
    let h = 1.0 / (1u64 << k) as f64;
    y.iter()
        .map(|&v| (level_index(v, k) as f64 + 0.5) * h)
        .collect()
}

/// `k_k(x, y) = 1_{x not in 5Q_{y,k}} k(x, y)`.
pub struct TruncateFar<'a, K: Kernel + ?Sized> {
    pub base: &'a K,
    pub k: u32,
}

pub fn truncate_far<K: Kernel + ?Sized>(base: &K, k: u32) -> TruncateFar<'_, K> {
    TruncateFar { base, k }
}

impl<K: Kernel + ?Sized> Kernel for TruncateFar<'_, K> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if in_five_cube(x, y, self.k) {
            0.0
        } else {
            self.base.eval(x, y)
        }
    }
}

/// `k_{k,s}(x, y) = 1_{x not in 5Q_{y,k}} (k(x, y) - k(x, c_{y,k+s-1}))`.
pub struct ShiftDifference<'a, K: Kernel + ?Sized> {
    pub base: &'a K,
    pub k: u32,
    pub s: u32,
}

pub fn shift_difference<K: Kernel + ?Sized>(base: &K, k: u32, s: u32) -> Result<ShiftDifference<'_, K>> {
    if k + s == 0 {
        return Err(Error::LevelOutOfRange {
            level: -1,
            min: 0,
            max: i64::MAX,
        });
    }
    Ok(ShiftDifference { base, k, s })
}

impl<K: Kernel + ?Sized> Kernel for ShiftDifference<'_, K> {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if in_five_cube(x, y, self.k) {
            return 0.0;
        }
        let c = cube_center(y, self.k + self.s - 1);
        self.base.eval(x, y) - self.base.eval(x, &c)
    }
}

/// Quadrature nodes of a grid: targets are finest-cell centers, sources are
/// `quad_refine^n` midpoints per finest cell with equal weights.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub grid: GridSpec,
    pub centers: Vec<Vec<f64>>,
    pub nodes: Vec<Vec<Vec<f64>>>,
    pub weight: f64,
}

impl Quadrature {
    pub fn new(grid: &GridSpec) -> Self {
        let centers = grid.centers(grid.depth);
        let nodes: Vec<Vec<Vec<f64>>> = (0..grid.n_finest()).map(|c| grid.subsample_points(c)).collect();
        let per = nodes.first().map_or(1, Vec::len) as f64;
        Self {
            grid: grid.clone(),
            centers,
            nodes,
            weight: grid.volume(grid.depth) / per,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `sum_{nodes y in cell src} w k(center(tgt), y)`; zero on the diagonal.
    pub fn entry<K: Kernel + ?Sized>(&self, kernel: &K, tgt: usize, src: usize) -> f64 {
        if tgt == src {
            return 0.0;
        }
        let x = &self.centers[tgt];
        self.nodes[src].iter().map(|y| kernel.eval(x, y)).sum::<f64>() * self.weight
    }

    /// One row of the quadrature matrix.
    pub fn row<K: Kernel + ?Sized>(&self, kernel: &K, tgt: usize) -> Vec<f64> {
        (0..self.len()).map(|src| self.entry(kernel, tgt, src)).collect()
    }
}

/// `s_{k,s} = k_{k,s} + r_{k,s}` with
/// `r_{k,s}(x, y) = 1_{A_k}(x, y) K(x) / (I(x) |x - y|^{n+gamma})`, where `K(x)`
/// and `I(x)` are computed with the quadrature that discretizes the kernel, so
/// every discrete row of `s_{k,s}` sums to zero.
pub struct CorrectedKernel<'a, K: Kernel + ?Sized> {
    pub shifted: ShiftDifference<'a, K>,
    pub gamma: f64,
    /// `K(x) = -∫ k_{k,s}(x, t) dt` per finest cell.
    pub k_of_x: Vec<f64>,
    /// `I(x) = ∫ 1_{A_k}(x, t) |x - t|^{-n-gamma} dt` per finest cell.
    pub i_of_x: Vec<f64>,
    /// `K(x)` where the annulus is empty and nothing can absorb it.
    pub unabsorbed: Vec<f64>,
    depth: u32,
}

pub fn corrected_kernel<'a, K: Kernel + ?Sized>(
    base: &'a K,
    gamma: f64,
    quad: &Quadrature,
    k: u32,
    s: u32,
) -> Result<CorrectedKernel<'a, K>> {
    let g = &quad.grid;
    if k > g.depth || k + s > g.depth + 1 {
        return Err(Error::LevelOutOfRange {
            level: (k + s) as i64,
            min: 1,
            max: g.depth as i64 + 1,
        });
    }
    let shifted = shift_difference(base, k, s)?;
    let n = base.n() as f64;
    let rows: Vec<(f64, f64)> = (0..quad.len())
        .into_par_iter()
        .map(|tgt| {
            let x = &quad.centers[tgt];
            let mut kx = 0.0;
            let mut ix = 0.0;
            for src in 0..quad.len() {
                if src == tgt {
                    continue;
                }
                kx -= quad.entry(&shifted, tgt, src);
                for y in &quad.nodes[src] {
                    if in_annulus(x, y, k) {
                        ix += quad.weight / sup_dist(x, y).powf(n + gamma);
                    }
                }
            }
            (kx, ix)
        })
        .collect();
    let k_of_x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let i_of_x: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let unabsorbed = rows
        .iter()
        .map(|&(kx, ix)| if ix > 0.0 { 0.0 } else { kx })
        .collect();
    Ok(CorrectedKernel {
        shifted,
        gamma,
        k_of_x,
        i_of_x,
        unabsorbed,
        depth: g.depth,
    })
}

impl<K: Kernel + ?Sized> CorrectedKernel<'_, K> {
    fn cell(&self, x: &[f64]) -> usize {
        x.iter()
            .fold(0usize, |acc, &v| (acc << self.depth) | level_index(v, self.depth) as usize)
    }

    /// The correction term alone.
    pub fn correction(&self, x: &[f64], y: &[f64]) -> f64 {
        if !in_annulus(x, y, self.shifted.k) {
            return 0.0;
        }
        let c = self.cell(x);
        let ix = self.i_of_x[c];
        if ix <= 0.0 {
            return 0.0;
        }
        self.k_of_x[c] / (ix * sup_dist(x, y).powf(self.n() as f64 + self.gamma))
    }

    /// `max_x |K(x)|`.
    pub fn max_abs_k(&self) -> f64 {
        self.k_of_x.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl<K: Kernel + ?Sized> Kernel for CorrectedKernel<'_, K> {
    fn n(&self) -> usize {
        self.shifted.n()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.shifted.eval(x, y) + self.correction(x, y)
    }
}

/// `c_n` in `|K(x)| <= c_n 2^{-gamma s}`: the sup-norm polar integral
/// `2^{-(k+s)gamma} ∫_{|t| > 4 2^{-k}} |t|^{-n-gamma} dt = n 2^n 4^{-gamma} / gamma * 2^{-gamma s}`.
pub fn correction_constant(n: usize, gamma: f64) -> f64 {
    n as f64 * 2f64.powi(n as i32) * 4f64.powf(-gamma) / gamma
}

/// Midpoint-rule value of
/// `X = ∫_{t in Q} ∫_{y notin Q} 1_{|t - y| > 2^{1-k}} |t - y|^{-n-gamma} dy dt`
/// for a cube `Q` of edge `2^{i-k}`, with `res` nodes per edge of `Q`.
///
/// The integral over the complement is the full exterior integral
/// `n 2^n delta^{-gamma} / gamma` minus the part inside `Q`.
pub fn annulus_integral(n: usize, gamma: f64, k: i32, i: i32, res: usize) -> f64 {
    let edge = 2f64.powi(i - k);
    let delta = 2f64.powi(1 - k);
    let h = edge / res as f64;
    let nodes: Vec<Vec<f64>> = (0..res.pow(n as u32))
        .map(|mut m| {
            let mut p = vec![0.0; n];
            for j in (0..n).rev() {
                p[j] = ((m % res) as f64 + 0.5) * h;
                m /= res;
            }
            p
        })
        .collect();
    let w = h.powi(n as i32);
    let exterior = n as f64 * 2f64.powi(n as i32) * delta.powf(-gamma) / gamma;
    nodes
        .par_iter()
        .map(|t| {
            let inside: f64 = nodes
                .iter()
                .map(|y| {
                    let r = sup_dist(t, y);
                    if r > delta {
                        w / r.powf(n as f64 + gamma)
                    } else {
                        0.0
                    }
                })
                .sum();
            w * (exterior - inside)
        })
        .sum()
}

/// Smooth bump on `R`, supported in `(1, 2)` and equal to one on `[5/4, 7/4]`.
pub fn bump(xi: f64) -> f64 {
    fn h(u: f64) -> f64 {
        if u > 0.0 {
            (-1.0 / u).exp()
        } else {
            0.0
        }
    }
    fn step(u: f64) -> f64 {
        let a = h(u);
        let b = h(1.0 - u);
        if a + b == 0.0 {
            0.0
        } else {
            a / (a + b)
        }
    }
    step(4.0 * (xi - 1.0)) * step(4.0 * (2.0 - xi))
}

/// Littlewood-Paley multipliers `phi_i(xi) = bump(2^{1-i} xi)` for
/// `i = 1..=m`; component `i` is the convolution kernel with symbol `phi_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpFamily {
    pub m: usize,
}

pub fn builtin_lp_family(m: usize) -> Result<LpFamily> {
    if m == 0 {
        return Err(Error::InvalidKernel("Littlewood-Paley family needs m >= 1".into()));
    }
    Ok(LpFamily { m })
}

impl LpFamily {
    /// Symbol of component `i` (1-based) at frequency `xi`.
    pub fn symbol(&self, i: usize, xi: f64) -> f64 {
        bump(2f64.powi(1 - i as i32) * xi)
    }

    /// `k_i(x - y)` for every component: the inverse Fourier transform of the
    /// symbol, by quadrature on `[0, 2^{m+1}]` with `res` nodes per unit.
    pub fn eval(&self, r: f64, res: usize) -> Vec<f64> {
        (1..=self.m)
            .map(|i| {
                let lo = 2f64.powi(i as i32 - 1);
                let hi = 2f64.powi(i as i32);
                let steps = ((hi - lo) * res as f64).ceil() as usize;
                let h = (hi - lo) / steps as f64;
                // symbol is real and supported on positive frequencies
                let mut re = 0.0;
                let mut im = 0.0;
                for j in 0..steps {
                    let xi = lo + (j as f64 + 0.5) * h;
                    let a = 2.0 * std::f64::consts::PI * xi * r;
                    let v = self.symbol(i, xi) * h;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hilbert_basics() {
        let h = builtin_hilbert(1).unwrap();
        assert!(builtin_hilbert(2).is_err());
        assert_eq!(h.eval(&[0.75], &[0.25]), 1.0);
        assert_eq!(h.eval(&[0.25], &[0.75]), -h.eval(&[0.75], &[0.25]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = check_predicates(&h, 1.0, 10_000, &mut rng);
        assert!(r.passes(), "{r:?}");
    }

    #[test]
    fn power_predicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            for gamma in [0.25, 0.5, 1.0] {
                let kern = builtin_power(n, gamma).unwrap();
                let r = check_predicates(&kern, gamma, 10_000, &mut rng);
                assert!(r.passes(), "n={n} gamma={gamma} {r:?}");
            }
        }
        assert!(builtin_power(1, 0.0).is_err());
        assert!(builtin_power(1, 1.5).is_err());
        assert!(builtin_power(0, 0.5).is_err());
    }

    #[test]
    fn predicates_detect_a_too_large_kernel() {
        struct Big;
        impl Kernel for Big {
            fn n(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
                4.0 / (x[0] - y[0])
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(!check_predicates(&Big, 1.0, 1000, &mut rng).passes());
    }

    #[test]
    fn truncation_masks() {
        let h = builtin_hilbert(1).unwrap();
        let t = truncate_far(&h, 3);
        // same level-3 cube
        assert_eq!(t.eval(&[0.01], &[0.1]), 0.0);
        // sup-distance beyond 5 * 2^-4 from the center of y's cube
        assert_eq!(t.eval(&[0.9], &[0.0625]), h.eval(&[0.9], &[0.0625]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let x = [rng.gen_range(0.0..1.0)];
            let y = [rng.gen_range(0.0..1.0)];
            for k in 0..6 {
                assert_eq!(in_five_cube(&x, &y, k), in_five_cube(&y, &x, k));
                let oracle = crate::dyadic::in_dilated(&x, &crate::dyadic::cube_of(&y, k).unwrap(), 5).unwrap();
                assert_eq!(in_five_cube(&x, &y, k), oracle);
            }
        }
    }

    #[test]
    fn shift_difference_properties() {
        let h = builtin_hilbert(1).unwrap();
        let sd = shift_difference(&h, 2, 2).unwrap();
        let c = cube_center(&[0.9], 3);
        assert_eq!(sd.eval(&[0.1], &c), 0.0);
        assert_eq!(sd.eval(&[0.8], &[0.9]), 0.0);
        assert!(shift_difference(&h, 0, 0).is_err());
        // pointwise bound C 2^{-(k+s)gamma} / |x-y|^{n+gamma} with C <= 4
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for k in 1..5u32 {
            for s in 0..4u32 {
                let sd = shift_difference(&h, k, s).unwrap();
                for _ in 0..2000 {
                    let x = [rng.gen_range(0.0..1.0)];
                    let y = [rng.gen_range(0.0..1.0)];
                    let v = sd.eval(&x, &y).abs();
                    if v > 0.0 {
                        let b = 2f64.powi(-((k + s) as i32)) / sup_dist(&x, &y).powi(2);
                        worst = worst.max(v / b);
                    }
                }
            }
        }
        assert!(worst <= 4.0, "fitted constant {worst}");
        // at cube centers the shifted kernel equals the truncated one
        let tf = truncate_far(&h, 2);
        let sd = shift_difference(&h, 2, 1).unwrap();
        let y = cube_center(&[0.7], 2);
        for x in [0.01, 0.2, 0.33] {
            let x = [x];
            assert_eq!(sd.eval(&x, &y), 0.0);
            let _ = tf.eval(&x, &y);
        }
    }

    #[test]
    fn corrected_rows_cancel() {
        let g = GridSpec::new(1, 6, 1).unwrap();
        let quad = Quadrature::new(&g);
        let h = builtin_hilbert(1).unwrap();
        for (k, s) in [(2, 1), (3, 0), (3, 2), (4, 3)] {
            let ck = corrected_kernel(&h, 1.0, &quad, k, s).unwrap();
            for tgt in 0..quad.len() {
                let row = quad.row(&ck, tgt);
                let sum: f64 = row.iter().sum();
                let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs())) / quad.weight;
                assert!(sum.abs() <= 1e-8 * scale.max(1e-300), "k={k} s={s} row {tgt}: {sum}");
                // the correction lives inside 5Q_{y,k}
                for src in 0..quad.len() {
                    let x = &quad.centers[tgt];
                    let y = &quad.centers[src];
                    if !in_five_cube(x, y, k) {
                        assert_eq!(ck.correction(x, y), 0.0);
                    }
                }
            }
            let bound = correction_constant(1, 1.0) * 2f64.powi(-(s as i32));
            assert!(ck.max_abs_k() <= bound, "|K| = {} > {bound}", ck.max_abs_k());
        }
        let z = builtin_zero(1).unwrap();
        let ck = corrected_kernel(&z, 1.0, &quad, 3, 1).unwrap();
        assert_eq!(ck.max_abs_k(), 0.0);
    }

    #[test]
    fn empty_annulus_is_reported() {
        let g = GridSpec::new(1, 4, 1).unwrap();
        let quad = Quadrature::new(&g);
        let h = builtin_hilbert(1).unwrap();
        let ck = corrected_kernel(&h, 1.0, &quad, 1, 1).unwrap();
        // at level 1 every pair is within 5Q, so there is nothing to correct
        assert!(ck.i_of_x.iter().all(|&v| v == 0.0));
        assert!(ck.unabsorbed.iter().all(|&v| v == 0.0));
    }

    /// `X = (2/gamma) ∫_0^L max(u, delta)^{-gamma} du` for `n = 1`.
    fn annulus_oracle(gamma: f64, k: i32, i: i32) -> f64 {
        let l = 2f64.powi(i - k);
        let d = 2f64.powi(1 - k);
        let g = |a: f64, b: f64| (b.powf(1.0 - gamma) - a.powf(1.0 - gamma)) / (1.0 - gamma);
        let integral = if gamma == 1.0 {
            if l <= d {
                l / d
            } else {
                1.0 + (l / d).ln()
            }
        } else if l <= d {
            l * d.powf(-gamma)
        } else {
            d.powf(1.0 - gamma) + g(d, l)
        };
        2.0 / gamma * integral
    }

    #[test]
    fn annulus_integral_matches_closed_form() {
        for gamma in [0.5, 1.0] {
            for k in 3..=5 {
                for i in 0..=3 {
                    let num = annulus_integral(1, gamma, k, i, 512);
                    let exact = annulus_oracle(gamma, k, i);
                    assert!((num - exact).abs() <= 5e-3 * exact, "{gamma} {k} {i}: {num} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn bump_and_lp_family() {
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(2.0), 0.0);
        assert_eq!(bump(1.5), 1.0);
        assert_eq!(bump(1.25), 1.0);
        assert!(bump(1.1) > 0.0 && bump(1.1) < 1.0);
        let fam = builtin_lp_family(6).unwrap();
        assert!(builtin_lp_family(0).is_err());
        for i in 1..=6usize {
            let lo = 1.25 * 2f64.powi(i as i32 - 1);
            for j in 1..=20 {
                let xi = lo + 0.5 * j as f64 / 21.0;
                assert_eq!(fam.symbol(i, xi), 1.0);
                for other in 1..=6usize {
                    if other != i {
                        assert_eq!(fam.symbol(other, xi), 0.0);
                    }
                }
            }
        }
        for xi in (1..4000).map(|v| v as f64 * 0.03) {
            for i in 1..=6usize {
                for j in i + 2..=6 {
                    assert_eq!(fam.symbol(i, xi) * fam.symbol(j, xi), 0.0);
                }
            }
        }
        // |k(r)|_2 <= C / |r|
        let mut worst = 0.0f64;
        for r in [0.01, 0.05, 0.1, 0.3, 1.0, 2.5] {
            let v = fam.eval(r, 64);
            let l2 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(l2 * r);
        }
        assert!(worst < 1.0, "{worst}");
    }
}
