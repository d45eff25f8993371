//! Browser bindings for three small demonstrations: where the Cuculescu
//! projections stop, how fast `A^perp T g` decays in the shift, and how the
//! kernel correction restores row cancellation.
//!
//! Each export returns a JSON string; the plain functions behind them are
//! usable (and tested) natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use nccz::czdecomp::shifted_column;
use nccz::dyadic::GridSpec;
use nccz::funcspace::lp_norm;
use nccz::kernels::{builtin_hilbert, correction_constant, corrected_kernel, shift_difference, Quadrature};
use nccz::martingale::{build_martingale, cuculescu, CuculescuFamily, MartingaleSeq};
use nccz::random::{member_rng, random_multiscale_unit};
use nccz::sio::{apply, discretize, pseudoloc_from_cuculescu};
use nccz::{Error, Result};

fn bounded(name: &str, v: u32, lo: u32, hi: u32) -> Result<u32> {
    if v < lo || v > hi {
        return Err(Error::Config(format!("{name} = {v} must lie in [{lo}, {hi}]")));
    }
    Ok(v)
}

fn member(depth: u32, d: usize, seed: u64, multiple: f64) -> Result<(MartingaleSeq, CuculescuFamily)> {
    if !(multiple >= 1.0 && multiple.is_finite()) {
        return Err(Error::Config(format!("threshold multiple {multiple} must be >= 1")));
    }
    let g = GridSpec::new(1, depth, d)?;
    let m = build_martingale(&random_multiscale_unit(&g, &mut member_rng(seed, 0)));
    let fam = cuculescu(&m, multiple * m.level(0).sup_norm())?;
    Ok((m, fam))
}

#[derive(Debug, Serialize)]
pub struct StoppingPicture {
    pub depth: u32,
    pub d: usize,
    pub threshold: f64,
    /// Normalized trace of the input on the finest cells.
    pub density: Vec<f64>,
    /// `rank q_n` per level-`n` cell, `n = 0..=depth`.
    pub kept: Vec<Vec<f64>>,
    /// `rank p_n` per level-`n` cell.
    pub stopped: Vec<Vec<f64>>,
    pub trace_q_perp: f64,
    pub trace_bound: f64,
}

pub fn stopping_picture(depth: u32, d: u32, seed: u64, multiple: f64) -> Result<StoppingPicture> {
    let depth = bounded("depth", depth, 1, 10)?;
    let d = bounded("d", d, 1, 4)? as usize;
    let (m, fam) = member(depth, d, seed, multiple)?;
    let rank = |f: &nccz::funcspace::OperatorField| f.values().iter().map(|v| v.trace().re).collect::<Vec<_>>();
    Ok(StoppingPicture {
        depth,
        d,
        threshold: fam.threshold(),
        density: m.source().values().iter().map(|v| v.trace().re / d as f64).collect(),
        kept: (0..=depth).map(|n| rank(fam.q(n))).collect(),
        stopped: (0..=depth).map(|n| rank(fam.p(n))).collect(),
        trace_q_perp: fam.trace_q_perp(),
        trace_bound: lp_norm(m.source(), 1.0)? / fam.threshold(),
    })
}

#[derive(Debug, Serialize)]
pub struct DecayCurve {
    pub s: Vec<u32>,
    /// `log2 |A^perp T g|_2 / |g|_2`, `None` where `g` vanishes.
    pub log2_ratio: Vec<Option<f64>>,
    /// Least-squares slope over the defined points.
    pub slope: Option<f64>,
}

pub fn decay_curve(depth: u32, seed: u64, multiple: f64) -> Result<DecayCurve> {
    let depth = bounded("depth", depth, 3, 8)?;
    let (m, fam) = member(depth, 2, seed, multiple)?;
    let op = discretize(&builtin_hilbert(1)?, &Quadrature::new(m.source().grid()), "T")?;
    let perp = pseudoloc_from_cuculescu(&fam, 1)?.complement();
    let mut s_vals = Vec::new();
    let mut ratios = Vec::new();
    for s in 1..depth {
        let g = shifted_column(&m, &fam, s)?;
        let ng = lp_norm(&g, 2.0)?;
        let r = if ng > 1e-9 {
            Some((lp_norm(&perp.mul(&apply(&op, &g)?)?, 2.0)? / ng).log2())
        } else {
            None
        };
        s_vals.push(s);
        ratios.push(r.filter(|v| v.is_finite()));
    }
    let pts: Vec<(f64, f64)> = s_vals
        .iter()
        .zip(&ratios)
        .filter_map(|(&s, r)| r.map(|v| (s as f64, v)))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(DecayCurve {
        s: s_vals,
        log2_ratio: ratios,
        slope,
    })
}

#[derive(Debug, Serialize)]
pub struct KernelSurgery {
    pub centers: Vec<f64>,
    /// Row sums of the shifted difference before correction.
    pub raw_row_sum: Vec<f64>,
    /// Row sums after adding the annulus correction.
    pub corrected_row_sum: Vec<f64>,
    pub max_abs_k: f64,
    /// `c 2^{-gamma s}`.
    pub bound: f64,
}

pub fn kernel_surgery(depth: u32, k: u32, s: u32) -> Result<KernelSurgery> {
    let depth = bounded("depth", depth, 2, 8)?;
    let k = bounded("k", k, 1, depth)?;
    let s = bounded("s", s, 0, depth + 1 - k)?;
    let h = builtin_hilbert(1)?;
    let quad = Quadrature::new(&GridSpec::new(1, depth, 1)?);
    let raw = shift_difference(&h, k, s)?;
    let ck = corrected_kernel(&h, 1.0, &quad, k, s)?;
    let raw_row_sum = (0..quad.len()).map(|r| quad.row(&raw, r).iter().sum()).collect();
    let corrected_row_sum = (0..quad.len())
        .map(|r| quad.row(&ck, r).iter().sum::<f64>() + ck.unabsorbed[r])
        .collect();
    Ok(KernelSurgery {
        centers: quad.centers.iter().map(|c| c[0]).collect(),
        raw_row_sum,
        corrected_row_sum,
        max_abs_k: ck.max_abs_k(),
        bound: correction_constant(1, 1.0) * 2f64.powi(-(s as i32)),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = stoppingPicture)]
pub fn stopping_picture_js(depth: u32, d: u32, seed: u32, multiple: f64) -> std::result::Result<String, JsError> {
    to_js(stopping_picture(depth, d, seed as u64, multiple))
}

#[wasm_bindgen(js_name = decayCurve)]
pub fn decay_curve_js(depth: u32, seed: u32, multiple: f64) -> std::result::Result<String, JsError> {
    to_js(decay_curve(depth, seed as u64, multiple))
}

#[wasm_bindgen(js_name = kernelSurgery)]
pub fn kernel_surgery_js(depth: u32, k: u32, s: u32) -> std::result::Result<String, JsError> {
    to_js(kernel_surgery(depth, k, s))
}
