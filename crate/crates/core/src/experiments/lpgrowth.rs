//! Growth of `|f_m|_p` and `|T f_m|_{C_p}` for the Littlewood-Paley row
//! functions `f_m = sum_{k <= m} g_k ⊗ e_{1,k}` on a periodic lattice.

use rustfft::FftPlanner;
use serde_json::Value;

use super::{linear_fit, num, ExperimentReport, LatticeSpec, ResolvedConfig, Table, Verdict};
use crate::error::{Error, Result};
use crate::kernels::builtin_lp_family;
use crate::matalg::{singular_values, MatElem, C64};

/// Left end of frequency band `k >= 1`: `(5/4) 2^{k-1}`; the band has width 1/2.
pub fn band_start(k: usize) -> f64 {
    1.25 * 2f64.powi(k as i32 - 1)
}

/// Lattice bins `j` (frequency `j / period`) strictly inside band `k`.
pub fn band_bins(lat: &LatticeSpec, k: usize) -> Vec<usize> {
    let a = band_start(k);
    let lo = (a * lat.period).floor() as i64 + 1;
    let hi = ((a + 0.5) * lat.period).ceil() as i64 - 1;
    (lo.max(0)..=hi).map(|j| j as usize).collect()
}

/// Largest `m` such that bands `1..=m` each hold at least one bin below the
/// Nyquist index.
pub fn band_capacity(lat: &LatticeSpec) -> usize {
    let mut m = 0;
    loop {
        let bins = band_bins(lat, m + 1);
        if bins.is_empty() || *bins.last().unwrap() >= lat.size / 2 || m >= 62 {
            return m;
        }
        m += 1;
    }
}

/// Samples of `g_k` and of `phi_i * g_k` for `i, k <= m`.
pub struct LpSamples {
    /// `g[k-1][x]`.
    pub g: Vec<Vec<C64>>,
    /// `h[i-1][k-1][x]`.
    pub h: Vec<Vec<Vec<C64>>>,
}

pub fn lp_samples(lat: &LatticeSpec, m: usize) -> Result<LpSamples> {
    let cap = band_capacity(lat);
    if m > cap {
        return Err(Error::Config(format!(
            "m = {m} exceeds the band capacity {cap} of a {}-point lattice with period {}",
            lat.size, lat.period
        )));
    }
    let fam = builtin_lp_family(m)?;
    let n = lat.size;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let synth = |spectrum: Vec<C64>| {
        let mut buf = spectrum;
        ifft.process(&mut buf);
        buf
    };
    let mut g = Vec::with_capacity(m);
    let mut h = vec![Vec::with_capacity(m); m];
    for k in 1..=m {
        let bins = band_bins(lat, k);
        let mut spec = vec![C64::new(0.0, 0.0); n];
        for &b in &bins {
            spec[b] = C64::new(1.0, 0.0);
        }
        g.push(synth(spec));
        for (i, hi) in h.iter_mut().enumerate() {
            let mut spec = vec![C64::new(0.0, 0.0); n];
            for &b in &bins {
                spec[b] = C64::new(fam.symbol(i + 1, b as f64 / lat.period), 0.0);
            }
            hi.push(synth(spec));
        }
    }
    Ok(LpSamples { g, h })
}

/// `(|f_m|_p, |T f_m|_{C_p})` with the normalized counting measure.
pub fn lp_norms(samples: &LpSamples, m: usize, p: f64) -> Result<(f64, f64)> {
    crate::matalg::check_exponent(p)?;
    let n = samples.g[0].len();
    let mut f_sum = 0.0;
    let mut t_sum = 0.0;
    for x in 0..n {
        let sq: f64 = (0..m).map(|k| samples.g[k][x].norm_sqr()).sum();
        f_sum += sq.powf(p / 2.0);
        let entries: Vec<C64> = (0..m)
            .flat_map(|i| (0..m).map(move |k| (i, k)))
            .map(|(i, k)| samples.h[i][k][x])
            .collect();
        let hm = MatElem::from_row_major(m, &entries)?;
        t_sum += singular_values(&hm).iter().map(|s| s.powf(p)).sum::<f64>();
    }
    Ok(((f_sum / n as f64).powf(1.0 / p), (t_sum / n as f64).powf(1.0 / p)))
}

pub fn run_lp_growth(config: &ResolvedConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(config);
    let lat = &config.lattice;
    let m_max = *config.m.iter().max().expect("validated nonempty");
    let samples = lp_samples(lat, m_max)?;
    report.notes.push(format!(
        "lattice of {} points, period {}, band capacity {}, {} bin(s) in band 1",
        lat.size,
        lat.period,
        band_capacity(lat),
        band_bins(lat, 1).len()
    ));
    let mut table = Table::new("norms", &["p", "m", "f_norm", "tf_cp_norm", "f_ratio", "tf_ratio"]);
    let tol = config.tolerances.growth_tol;
    let mut exps = Vec::new();
    for &p in &config.p {
        let mut xs = Vec::new();
        let mut yf = Vec::new();
        let mut yt = Vec::new();
        let (f1, t1) = lp_norms(&samples, 1, p)?;
        for &m in &config.m {
            let (f, t) = lp_norms(&samples, m, p)?;
            table.push(vec![num(p), Value::from(m), num(f), num(t), num(f / f1), num(t / t1)]);
            xs.push((m as f64).ln());
            yf.push(f.ln());
            yt.push(t.ln());
        }
        let ff = linear_fit(&format!("f_growth_p{p}"), &xs, &yf);
        let ft = linear_fit(&format!("tf_growth_p{p}"), &xs, &yt);
        match (ff, ft) {
            (Some(ff), Some(ft)) => {
                report.verdicts.push(
                    Verdict::within(&format!("f_exponent_p{p}"), ff.slope, 0.5, tol)
                        .gated(ff.residual, config.tolerances.max_residual),
                );
                report.verdicts.push(
                    Verdict::within(&format!("tf_exponent_p{p}"), ft.slope, 1.0 / p, tol)
                        .gated(ft.residual, config.tolerances.max_residual),
                );
                exps.push((p, ff.slope, ft.slope));
                report.fits.push(ff);
                report.fits.push(ft);
            }
            _ => report
                .notes
                .push(format!("p = {p}: fewer than two distinct m values, no growth fit")),
        }
    }
    if let Some(&(_, ef, et)) = exps.iter().find(|e| e.0 == 2.0) {
        report
            .verdicts
            .push(Verdict::at_most("plancherel_agreement", (ef - et).abs(), tol));
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(size: usize, period: f64) -> LatticeSpec {
        LatticeSpec { size, period }
    }

    #[test]
    fn band_geometry() {
        let l = lat(1 << 12, 8.0);
        // (5/4, 7/4) on bins of width 1/8: 11/8, 12/8, 13/8
        assert_eq!(band_bins(&l, 1), vec![11, 12, 13]);
        assert!((1..=8).all(|k| band_bins(&l, k).len() == 3));
        assert_eq!(band_capacity(&l), 8);
        assert_eq!(band_capacity(&lat(1 << 12, 4.0)), 9);
        assert_eq!(band_bins(&lat(64, 1.0), 1), Vec::<usize>::new());
        assert_eq!(band_capacity(&lat(64, 1.0)), 0);
        assert!(lp_samples(&l, 16).is_err());
    }

    #[test]
    fn single_band_and_exact_growth() {
        let l = lat(1 << 10, 8.0);
        let s = lp_samples(&l, 6).unwrap();
        for p in [1.5, 2.0, 4.0] {
            let (f1, t1) = lp_norms(&s, 1, p).unwrap();
            assert!((f1 - t1).abs() <= 1e-10 * f1);
            for m in 2..=6 {
                let (f, t) = lp_norms(&s, m, p).unwrap();
                assert!((f / f1 - (m as f64).sqrt()).abs() < 1e-9);
                assert!((t / t1 - (m as f64).powf(1.0 / p)).abs() < 1e-9);
            }
        }
    }
}
