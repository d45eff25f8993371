//! Invariant suites of every module at small default sizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{draw_field, FieldModel};
use crate::czdecomp::{check_decomposition, check_zeta, good_bad, zeta};
use crate::dyadic::GridSpec;
use crate::error::Result;
use crate::funcspace::{cond_expectation, lp_norm, weak_l1_sup};
use crate::kernels::{builtin_hilbert, builtin_power, check_predicates, corrected_kernel, Quadrature};
use crate::martingale::{build_martingale, check_cuculescu, cuculescu};
use crate::matalg::{eig_hermitian, functional_calculus, hermitize, spectral_projection};
use crate::random::gaussian_matrix;
use crate::sio::{discretize, masking_deviation, opnorm2, schur_bound, OPNORM_ITERS, OPNORM_SEED, OPNORM_TOL};

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub module: String,
    pub property: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    fn push(&mut self, module: &str, property: &str, value: f64, bound: f64) {
        self.rows.push(CheckRow {
            module: module.into(),
            property: property.into(),
            value,
            bound,
            pass: value <= bound,
        });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12} {:<40} {:>12} {:>12}  status\n", "module", "property", "value", "bound");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<40} {:>12.3e} {:>12.3e}  {}\n",
                r.module,
                r.property,
                r.value,
                r.bound,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

pub fn run_check(seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport {
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // matalg
    let mut recon = 0.0f64;
    let mut idem = 0.0f64;
    for d in [1, 2, 4, 8] {
        for _ in 0..10 {
            let a = hermitize(&gaussian_matrix(d, &mut rng));
            let back = functional_calculus(&a, |x| x)?;
            recon = recon.max((&back - &a).op_norm() / (1.0 + a.op_norm()));
            let (vals, _) = eig_hermitian(&a)?;
            let t = vals[vals.len() / 2];
            let p = spectral_projection(&a, t)?;
            let m = p.as_mat();
            idem = idem.max((&(m * m) - m).op_norm());
        }
    }
    rep.push("matalg", "functional calculus reconstruction", recon, 1e-10);
    rep.push("matalg", "spectral projection idempotence", idem, 1e-10);

    // funcspace
    let g = GridSpec::new(1, 6, 2)?;
    let f = draw_field(&g, FieldModel::Iid, seed, 0);
    let mut tower = 0.0f64;
    for j in 0..6 {
        let a = cond_expectation(&cond_expectation(&f, j + 1)?, j)?;
        let b = cond_expectation(&f, j)?;
        tower = tower.max(a.max_diff(&b)?);
    }
    rep.push("funcspace", "tower property E_j E_{j+1} = E_j", tower, 1e-12);
    rep.push(
        "funcspace",
        "Chebyshev: sup_t t lambda_t(f) - |f|_1",
        weak_l1_sup(&f) - lp_norm(&f, 1.0)?,
        1e-12,
    );

    // martingale and czdecomp
    let cases: Vec<(usize, u32, u64)> = [1usize, 2, 4]
        .iter()
        .flat_map(|&d| [4u32, 6].into_iter().map(move |k| (d, k)))
        .flat_map(|(d, k)| (0..4u64).map(move |m| (d, k, m)))
        .collect();
    let results: Vec<(bool, bool, bool)> = cases
        .par_iter()
        .map(|&(d, k, m)| {
            let g = GridSpec::new(1, k, d)?;
            let f = draw_field(&g, FieldModel::Multiscale, seed, m);
            let mart = build_martingale(&f);
            let fam = cuculescu(&mart, 2.0 * mart.level(0).sup_norm())?;
            let c = check_cuculescu(&mart, &fam).passes();
            let parts = good_bad(&mart, &fam)?;
            let z = zeta(&fam, 5)?;
            let zr = check_zeta(&mart, &fam, &z).passes();
            let dr = check_decomposition(&mart, &fam, &parts, &z)?.passes();
            Ok((c, zr, dr))
        })
        .collect::<Result<_>>()?;
    let fails = |sel: fn(&(bool, bool, bool)) -> bool| results.iter().filter(|r| !sel(r)).count() as f64;
    rep.push("martingale", "Cuculescu property failures", fails(|r| r.0), 0.0);
    rep.push("czdecomp", "zeta cancellation / trace failures", fails(|r| r.1), 0.0);
    rep.push("czdecomp", "decomposition identity failures", fails(|r| r.2), 0.0);

    // kernels
    let h = builtin_hilbert(1)?;
    let mut worst = check_predicates(&h, 1.0, 1000, &mut rng);
    for (n, gamma) in [(1, 0.5), (2, 0.5), (2, 1.0)] {
        let p = builtin_power(n, gamma)?;
        let r = check_predicates(&p, gamma, 1000, &mut rng);
        worst.smooth_first = worst.smooth_first.max(r.smooth_first);
        worst.smooth_second = worst.smooth_second.max(r.smooth_second);
        worst.size = worst.size.max(r.size);
    }
    rep.push("kernels", "smoothness ratio (first variable)", worst.smooth_first, 1.0 + 1e-9);
    rep.push("kernels", "smoothness ratio (second variable)", worst.smooth_second, 1.0 + 1e-9);
    rep.push("kernels", "size ratio", worst.size, 1.0 + 1e-9);
    let g = GridSpec::new(1, 6, 1)?;
    let quad = Quadrature::new(&g);
    let mut cancel = 0.0f64;
    for (k, s) in [(2, 0), (2, 2), (3, 1)] {
        let ck = corrected_kernel(&h, 1.0, &quad, k, s)?;
        let scale = ck.max_abs_k().max(1e-300);
        for r in 0..quad.len() {
            let sum: f64 = quad.row(&ck, r).iter().sum::<f64>() + ck.unabsorbed[r];
            cancel = cancel.max(sum.abs() / scale);
        }
    }
    rep.push("kernels", "corrected kernel row cancellation", cancel, 1e-8);

    // sio
    let mut mask = 0.0f64;
    for k in 1..=4 {
        let q = Quadrature::new(&GridSpec::new(1, k, 1)?.with_refine(2)?);
        mask = mask.max(masking_deviation(&h, &q));
    }
    rep.push("sio", "masking identity deviation", mask, 0.0);
    let op = discretize(&h, &quad, "T")?;
    let est = opnorm2(&op, OPNORM_ITERS, OPNORM_TOL, OPNORM_SEED);
    rep.push("sio", "opnorm2 - schur_bound", est.value - schur_bound(&op), 1e-8);
    let skew = (&op.matrix + op.matrix.transpose()).abs().max();
    rep.push("sio", "Hilbert discretization skew-adjointness", skew, 1e-12);

    // experiments
    let lat = super::LatticeSpec {
        size: 1 << 10,
        period: 8.0,
    };
    let s = super::lpgrowth::lp_samples(&lat, 4)?;
    let mut dev = 0.0f64;
    for p in [1.5, 2.0, 4.0] {
        let (f1, t1) = super::lpgrowth::lp_norms(&s, 1, p)?;
        let (f4, t4) = super::lpgrowth::lp_norms(&s, 4, p)?;
        dev = dev
            .max(((f4 / f1).ln() / 4f64.ln() - 0.5).abs())
            .max(((t4 / t1).ln() / 4f64.ln() - 1.0 / p).abs());
    }
    rep.push("experiments", "Littlewood-Paley growth exponent deviation", dev, 0.05);
    let zero_f = draw_field(&GridSpec::new(1, 4, 1)?, FieldModel::Iid, seed, 1);
    let z = crate::kernels::builtin_zero(1)?;
    let r = super::weaktype::weak_ratio(&z, &zero_f)?;
    rep.push("experiments", "weak ratio of the zero kernel", r, 0.0);
    Ok(rep)
}
