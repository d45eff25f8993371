//! Ensemble maxima of `sup_t t lambda_t(Tf) / |f|_1` at depth `K` and `K + 1`.

use rayon::prelude::*;
use serde_json::Value;

use super::{draw_field, num, ExperimentReport, ResolvedConfig, Table, Verdict};
use crate::dyadic::GridSpec;
use crate::error::Result;
use crate::funcspace::{lp_norm, weak_l1_sup, OperatorField};
use crate::kernels::{Kernel, Quadrature};
use crate::sio::{apply, discretize};

/// `sup_t t lambda_t(Tf) / |f|_1`.
pub fn weak_ratio<K: Kernel + ?Sized>(kernel: &K, f: &OperatorField) -> Result<f64> {
    let op = discretize(kernel, &Quadrature::new(f.grid()), "T")?;
    let l1 = lp_norm(f, 1.0)?;
    if l1 == 0.0 {
        return Ok(0.0);
    }
    Ok(weak_l1_sup(&apply(&op, f)?) / l1)
}

/// Scalar `4 * 1_[0, 1/4)` on a one-dimensional grid of depth `depth`.
pub fn point_mass(depth: u32) -> Result<OperatorField> {
    let g = GridSpec::new(1, depth.max(2), 1)?;
    let vals: Vec<f64> = (0..4).map(|c| if c == 0 { 4.0 } else { 0.0 }).collect();
    OperatorField::scalar(&g, 2, &vals)
}

pub fn run_weaktype(config: &ResolvedConfig) -> Result<ExperimentReport> {
    let kernel = config.kernel.build()?;
    let mut report = ExperimentReport::new(config);
    let mut members = Table::new("members", &["depth", "member", "ratio"]);
    let mut maxima = Vec::new();
    for depth in [config.grid.depth, config.grid.depth + 1] {
        let mut grid = config.grid.clone();
        grid.depth = depth;
        grid.validate()?;
        let op = discretize(&kernel, &Quadrature::new(&grid), "T")?;
        let ratios: Vec<f64> = (0..config.ensemble as u64)
            .into_par_iter()
            .map(|m| {
                let f = draw_field(&grid, config.field, config.seed, m);
                let l1 = lp_norm(&f, 1.0)?;
                Ok(weak_l1_sup(&apply(&op, &f)?) / l1)
            })
            .collect::<Result<_>>()?;
        for (m, r) in ratios.iter().enumerate() {
            members.push(vec![Value::from(depth), Value::from(m), num(*r)]);
        }
        maxima.push((depth, ratios.iter().copied().fold(0.0, f64::max)));
    }
    let mut summary = Table::new("summary", &["depth", "ensemble_max", "point_mass_ratio"]);
    for &(depth, max) in &maxima {
        let pm = if config.grid.n == 1 {
            num(weak_ratio(&kernel, &point_mass(depth)?)?)
        } else {
            Value::Null
        };
        summary.push(vec![Value::from(depth), num(max), pm]);
    }
    let (m_k, m_k1) = (maxima[0].1, maxima[1].1);
    let factor = config.tolerances.stability_factor;
    report.verdicts.push(Verdict::new(
        "finite",
        m_k.max(m_k1),
        "finite".into(),
        m_k.is_finite() && m_k1.is_finite(),
    ));
    let rel = if m_k == 0.0 && m_k1 == 0.0 { 1.0 } else { m_k1 / m_k };
    report.verdicts.push(Verdict::new(
        "refinement_stability",
        rel,
        format!("in [1/{factor}, {factor}]"),
        rel <= factor && rel >= 1.0 / factor,
    ));
    report.notes.push(format!(
        "ensemble max {m_k:.6} at K = {}, {m_k1:.6} at K = {}",
        maxima[0].0, maxima[1].0
    ));
    report.tables.push(summary);
    report.tables.push(members);
    Ok(report)
}
