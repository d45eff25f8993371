//! Decay of `|A_fs^perp T g|_p / |g|_p` in the shift `s`, for inputs `g`
//! whose level-`(k+s)` increments are supported under `A_k`.

use rayon::prelude::*;
use serde_json::Value;

use super::{draw_member, linear_fit, median, num, ExperimentReport, ResolvedConfig, Table, Verdict};
use crate::czdecomp::shifted_column;
use crate::error::Result;
use crate::funcspace::lp_norm;
use crate::kernels::Quadrature;
use crate::sio::{apply, discretize, opnorm2, pseudoloc_from_cuculescu, schur_bound, DiscreteOperator, OPNORM_ITERS, OPNORM_SEED, OPNORM_TOL};

/// Inputs with `|g|_2` below this are treated as the degenerate case.
const DEGENERATE: f64 = 1e-9;

struct Point {
    s: u32,
    norm_g: f64,
    /// Per exponent: `(left ratio, right ratio)`.
    ratios: Vec<(f64, f64)>,
}

struct MemberRun {
    threshold: f64,
    doublings: u32,
    active: usize,
    trace_perp: f64,
    points: Vec<Point>,
}

fn measure_member(config: &ResolvedConfig, op: &DiscreteOperator, member: u64, ps: &[f64]) -> Result<MemberRun> {
    let mb = draw_member(config, &config.grid, member)?;
    let fam = pseudoloc_from_cuculescu(&mb.family, 1)?;
    let perp = fam.complement();
    let d = perp.dim() as f64;
    let trace_perp = d - perp.integral_trace().re;
    let mut points = Vec::new();
    for &s in &config.s {
        let g = shifted_column(&mb.martingale, &mb.family, s)?;
        let norm_g = lp_norm(&g, 2.0)?;
        let mut ratios = Vec::new();
        if norm_g > DEGENERATE {
            let left = perp.mul(&apply(op, &g)?)?;
            let g_adj = g.adjoint();
            let right = apply(op, &g_adj)?.mul(&perp)?;
            for &p in ps {
                ratios.push((lp_norm(&left, p)? / lp_norm(&g, p)?, lp_norm(&right, p)? / lp_norm(&g_adj, p)?));
            }
        }
        points.push(Point { s, norm_g, ratios });
    }
    Ok(MemberRun {
        threshold: mb.threshold,
        doublings: mb.doublings,
        active: mb.family.active_levels().len(),
        trace_perp,
        points,
    })
}

fn operator_row(table: &mut Table, label: &str, op: &DiscreteOperator) -> (f64, f64) {
    let est = opnorm2(op, OPNORM_ITERS, OPNORM_TOL, OPNORM_SEED);
    let schur = schur_bound(op);
    table.push(vec![
        Value::String(label.to_string()),
        num(est.value),
        Value::from(est.iterations),
        Value::Bool(est.converged),
        num(schur),
    ]);
    (est.value, schur)
}

pub(crate) fn operator_table() -> Table {
    Table::new("operators", &["operator", "opnorm2", "iterations", "converged", "schur_bound"])
}

fn run_common(config: &ResolvedConfig, ps: &[f64]) -> Result<(ExperimentReport, Vec<MemberRun>)> {
    let kernel = config.kernel.build()?;
    let quad = Quadrature::new(&config.grid);
    let op = discretize(&kernel, &quad, "T")?;
    let mut report = ExperimentReport::new(config);

    let mut ops = operator_table();
    let (norm, schur) = operator_row(&mut ops, "T", &op);
    report.tables.push(ops);
    report
        .verdicts
        .push(Verdict::at_least("schur_dominates", schur - norm, -1e-8));

    let runs: Vec<MemberRun> = (0..config.ensemble as u64)
        .into_par_iter()
        .map(|m| measure_member(config, &op, m, ps))
        .collect::<Result<_>>()?;

    let mut members = Table::new(
        "members",
        &["member", "threshold", "doublings", "active_levels", "trace_zeta_perp"],
    );
    let mut points = Table::new("points", &["member", "s", "p", "norm_g", "left_ratio", "right_ratio"]);
    for (m, run) in runs.iter().enumerate() {
        members.push(vec![
            Value::from(m),
            num(run.threshold),
            Value::from(run.doublings),
            Value::from(run.active),
            num(run.trace_perp),
        ]);
        if run.doublings > 0 {
            report
                .notes
                .push(format!("member {m}: threshold doubled {} time(s)", run.doublings));
        }
        for pt in &run.points {
            if pt.ratios.is_empty() {
                points.push(vec![Value::from(m), Value::from(pt.s), Value::Null, num(pt.norm_g), Value::Null, Value::Null]);
            }
            for (p, &(l, r)) in ps.iter().zip(&pt.ratios) {
                points.push(vec![Value::from(m), Value::from(pt.s), num(*p), num(pt.norm_g), num(l), num(r)]);
            }
        }
    }
    let degenerate: usize = runs
        .iter()
        .map(|r| r.points.iter().filter(|p| p.ratios.is_empty()).count())
        .sum();
    if degenerate > 0 {
        report.notes.push(format!(
            "{degenerate} (member, s) point(s) have |g|_2 <= {DEGENERATE:e} (no stopping at level <= K - s) and are excluded from fits"
        ));
    }
    report.tables.push(members);
    report.tables.push(points);
    Ok((report, runs))
}

/// Per-member slope of `log2` ratio against `s`, for exponent index `pi`.
fn member_slopes(runs: &[MemberRun], pi: usize, right: bool) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut ids = Vec::new();
    let mut slopes = Vec::new();
    let mut residuals = Vec::new();
    for (m, run) in runs.iter().enumerate() {
        let (xs, ys): (Vec<f64>, Vec<f64>) = run
            .points
            .iter()
            .filter(|p| !p.ratios.is_empty())
            .map(|p| {
                let (l, r) = p.ratios[pi];
                (p.s as f64, if right { r } else { l }.log2())
            })
            .filter(|(_, y)| y.is_finite())
            .unzip();
        if let Some(f) = linear_fit("member", &xs, &ys) {
            ids.push(m);
            slopes.push(f.slope);
            residuals.push(f.residual);
        }
    }
    (ids, slopes, residuals)
}

pub fn run_pseudoloc_l2(config: &ResolvedConfig) -> Result<ExperimentReport> {
    let (mut report, runs) = run_common(config, &[2.0])?;
    let gamma = config.gamma();
    let bound = -config.tolerances.slope_factor * gamma;
    let mut fits = Table::new("member_fits", &["member", "side", "slope", "residual"]);
    for (side, right) in [("left", false), ("right", true)] {
        let (ids, slopes, residuals) = member_slopes(&runs, 0, right);
        for ((m, s), r) in ids.iter().zip(&slopes).zip(&residuals) {
            fits.push(vec![Value::from(*m), Value::String(side.into()), num(*s), num(*r)]);
        }
        let Some(med) = median(&slopes) else {
            report.notes.push(format!("{side}: no member has two non-degenerate points"));
            report
                .verdicts
                .push(Verdict::new(&format!("median_slope_{side}"), f64::NAN, format!("<= {bound}"), false));
            continue;
        };
        let med_res = median(&residuals).unwrap_or(f64::NAN);
        report.verdicts.push(
            Verdict::at_most(&format!("median_slope_{side}"), med, bound)
                .gated(med_res, config.tolerances.max_residual),
        );
        report.notes.push(format!(
            "{side}: median slope {med:.4} over {} member(s), median residual {med_res:.4}",
            slopes.len()
        ));
    }
    report.tables.push(fits);
    Ok(report)
}

pub fn run_pseudoloc_lp(config: &ResolvedConfig) -> Result<ExperimentReport> {
    let ps = config.p.clone();
    let (mut report, runs) = run_common(config, &ps)?;
    let gamma = config.gamma();
    let mut curve = Table::new("median_curve", &["p", "s", "median_left_ratio", "members"]);
    for (pi, &p) in ps.iter().enumerate() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &s in &config.s {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.points.iter().find(|pt| pt.s == s))
                .filter(|pt| !pt.ratios.is_empty())
                .map(|pt| pt.ratios[pi].0)
                .collect();
            if let Some(med) = median(&vals) {
                curve.push(vec![num(p), Value::from(s), num(med), Value::from(vals.len())]);
                xs.push(s as f64);
                ys.push(med.log2());
            }
        }
        let monotone = ys.windows(2).all(|w| w[1] <= w[0]);
        if !monotone {
            report.notes.push(format!("p = {p}: median ratios are not monotone in s"));
        }
        let name = format!("theta_p{p}");
        match linear_fit(&format!("log2_ratio_p{p}"), &xs, &ys) {
            Some(fit) => {
                let theta = -fit.slope / gamma;
                report.verdicts.push(
                    Verdict::greater(&name, theta, config.tolerances.theta_floor)
                        .gated(fit.residual, config.tolerances.max_residual),
                );
                report.fits.push(fit);
            }
            None => {
                report.notes.push(format!("p = {p}: fewer than two non-degenerate shifts"));
                report.verdicts.push(Verdict::new(&name, f64::NAN, "> 0".into(), false));
            }
        }
    }
    report.tables.push(curve);
    Ok(report)
}

