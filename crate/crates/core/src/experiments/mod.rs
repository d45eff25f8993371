//! Seeded end-to-end experiments and their reports.

pub mod check;
pub mod lpgrowth;
pub mod phipsi;
pub mod pseudoloc;
pub mod weaktype;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dyadic::GridSpec;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::martingale::{build_martingale, cuculescu, CuculescuFamily, MartingaleSeq};
use crate::random::{member_rng, random_multiscale_unit, random_positive_unit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pseudoloc,
    PseudolocLp,
    Weaktype,
    Phipsi,
    Lpgrowth,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Pseudoloc => "pseudoloc",
            ExperimentKind::PseudolocLp => "pseudoloc-lp",
            ExperimentKind::Weaktype => "weaktype",
            ExperimentKind::Phipsi => "phipsi",
            ExperimentKind::Lpgrowth => "lpgrowth",
        }
    }
}

/// How random input fields are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldModel {
    /// Independent `g* g` per finest cell.
    Iid,
    /// `g* g` with `g` a sum of independent step fields, one per level.
    Multiscale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Decay verdicts require a slope `<= -slope_factor * gamma`.
    pub slope_factor: f64,
    /// Fits with a larger relative residual are inconclusive.
    pub max_residual: f64,
    /// Weak-type refinement stability factor.
    pub stability_factor: f64,
    /// Allowed deviation of growth exponents.
    pub growth_tol: f64,
    /// Lower bound on fitted `theta_p`.
    pub theta_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            slope_factor: 0.4,
            max_residual: 0.2,
            stability_factor: 2.0,
            growth_tol: 0.05,
            theta_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Number of sample points.
    pub size: usize,
    /// Length of the periodic domain; frequency bins are `j / period`.
    pub period: f64,
}

/// Configuration as read from JSON: every field is optional and falls back to
/// the defaults of the chosen experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub ensemble: Option<usize>,
    #[serde(default)]
    pub field: Option<FieldModel>,
    #[serde(default)]
    pub threshold_multiple: Option<f64>,
    #[serde(default)]
    pub s: Option<Vec<u32>>,
    #[serde(default)]
    pub i: Option<Vec<u32>>,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    #[serde(default)]
    pub m: Option<Vec<usize>>,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
}

/// Fully resolved configuration, echoed in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub ensemble: usize,
    pub field: FieldModel,
    pub threshold_multiple: f64,
    pub s: Vec<u32>,
    pub i: Vec<u32>,
    pub p: Vec<f64>,
    pub m: Vec<usize>,
    pub lattice: LatticeSpec,
    pub tolerances: Tolerances,
}

impl ResolvedConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let grid = |depth, d| GridSpec::new(1, depth, d).expect("default grid is valid");
        let (grid, ensemble, s) = match kind {
            ExperimentKind::Pseudoloc | ExperimentKind::PseudolocLp => (grid(10, 2), 20, (1..=6).collect()),
            ExperimentKind::Weaktype => (grid(8, 2), 100, vec![]),
            ExperimentKind::Phipsi => (grid(8, 1), 1, (0..=3).collect()),
            ExperimentKind::Lpgrowth => (grid(1, 1), 1, vec![]),
        };
        let p = match kind {
            ExperimentKind::PseudolocLp => vec![1.5, 2.0, 3.0, 4.0],
            ExperimentKind::Lpgrowth => vec![1.5, 2.0, 4.0],
            _ => vec![2.0],
        };
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: kind,
            seed: 1,
            grid,
            kernel: KernelSpec::Hilbert,
            ensemble,
            field: FieldModel::Multiscale,
            threshold_multiple: 2.0,
            s,
            i: (0..=4).collect(),
            p,
            m: (1..=8).collect(),
            lattice: LatticeSpec {
                size: 1 << 12,
                period: 8.0,
            },
            tolerances: Tolerances::default(),
        }
    }

    pub fn resolve(kind: ExperimentKind, cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<Self> {
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::Config(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        let mut r = Self::defaults(kind);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = &cfg.$f { r.$f = v.clone(); })* };
        }
        take!(seed, grid, kernel, ensemble, field, threshold_multiple, s, i, p, m, lattice, tolerances);
        if let Some(seed) = seed_override {
            r.seed = seed;
        }
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let model = self.kernel.build()?;
        if model.n != self.grid.n {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match grid dimension {}",
                model.n, self.grid.n
            )));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        need(self.ensemble >= 1, "ensemble must be >= 1")?;
        need(
            self.experiment == ExperimentKind::Lpgrowth || self.grid.depth >= 1,
            "grid depth must be >= 1",
        )?;
        need(
            self.threshold_multiple.is_finite() && self.threshold_multiple >= 1.0,
            "threshold_multiple must be finite and >= 1",
        )?;
        match self.experiment {
            ExperimentKind::Pseudoloc | ExperimentKind::PseudolocLp => {
                need(!self.s.is_empty(), "s list must be nonempty")?;
                need(self.s.iter().all(|&s| s >= 1), "s values must be >= 1")?;
            }
            ExperimentKind::Weaktype => need(self.ensemble >= 10, "weaktype needs ensemble >= 10")?,
            ExperimentKind::Phipsi => {
                need(!self.s.is_empty(), "s list must be nonempty")?;
                need(!self.i.is_empty(), "i list must be nonempty")?;
            }
            ExperimentKind::Lpgrowth => {
                need(!self.m.is_empty(), "m list must be nonempty")?;
                need(self.m.iter().all(|&m| m >= 1), "m values must be >= 1")?;
                need(self.lattice.size >= 2, "lattice size must be >= 2")?;
                need(
                    self.lattice.period.is_finite() && self.lattice.period > 0.0,
                    "lattice period must be positive",
                )?;
            }
        }
        if matches!(self.experiment, ExperimentKind::PseudolocLp | ExperimentKind::Lpgrowth) {
            need(!self.p.is_empty(), "p list must be nonempty")?;
        }
        for &p in &self.p {
            need(p.is_finite() && p > 1.0, &format!("p = {p} must lie in (1, inf)"))?;
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.kernel.build().map(|k| k.gamma).unwrap_or(1.0)
    }
}

/// Parse a JSON config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    /// `sqrt(SS_res / SS_tot)`; zero when the data are exactly constant.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares line through `(x, y)`; `None` with fewer than two distinct `x`.
pub fn linear_fit(name: &str, xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let residual = if ss_tot > 0.0 { (ss_res / ss_tot).sqrt() } else { 0.0 };
    Some(Fit {
        name: name.to_string(),
        slope,
        intercept,
        residual,
        points: n,
    })
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub status: Status,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("<= {bound}"), value <= bound)
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!(">= {bound}"), value >= bound)
    }

    pub fn greater(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("> {bound}"), value > bound)
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::new(name, value, format!("{target} +- {tol}"), (value - target).abs() <= tol)
    }

    pub fn new(name: &str, value: f64, bound: String, ok: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            bound,
            status: if ok && value.is_finite() { Status::Pass } else { Status::Fail },
        }
    }

    /// Downgrade to inconclusive when the supporting fit is too noisy.
    pub fn gated(mut self, residual: f64, max_residual: f64) -> Self {
        if !(residual <= max_residual) {
            self.status = Status::Inconclusive;
        }
        self
    }
}

/// Rows of a CSV-like table; cells are JSON scalars.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Column `name` as floats, skipping non-numeric cells.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.columns.iter().position(|c| c == name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[j].as_f64()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config: ResolvedConfig,
    pub tables: Vec<Table>,
    pub fits: Vec<Fit>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    pub fn new(config: &ResolvedConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment.name().to_string(),
            seed: config.seed,
            config: config.clone(),
            tables: Vec::new(),
            fits: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status == Status::Pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// The report without its wall-time, for determinism comparisons.
    pub fn to_json_stable(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_time_s = 0.0;
        Ok(serde_json::to_string_pretty(&r)?)
    }

    /// Write `<name>.json` and one `<name>_<table>.csv` per table into `dir`,
    /// each through a temporary file renamed into place.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = serde_json::to_string_pretty(self)?;
        written.push(write_atomic(&dir.join(format!("{}.json", self.experiment)), json.as_bytes())?);
        for t in &self.tables {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            written.push(write_atomic(&dir.join(format!("{}_{}.csv", self.experiment, t.name)), &buf)?);
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(path.to_path_buf())
}

pub fn run(config: &ResolvedConfig) -> Result<ExperimentReport> {
    let start = std::time::Instant::now();
    let mut report = match config.experiment {
        ExperimentKind::Pseudoloc => pseudoloc::run_pseudoloc_l2(config)?,
        ExperimentKind::PseudolocLp => pseudoloc::run_pseudoloc_lp(config)?,
        ExperimentKind::Weaktype => weaktype::run_weaktype(config)?,
        ExperimentKind::Phipsi => phipsi::run_phipsi(config)?,
        ExperimentKind::Lpgrowth => lpgrowth::run_lp_growth(config)?,
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// A seeded positive unit-mass input with its martingale and Cuculescu family
/// at `t = multiple * lambda_max(f_0)`, doubling `t` if the precondition fails.
pub struct Member {
    pub martingale: MartingaleSeq,
    pub family: CuculescuFamily,
    pub threshold: f64,
    pub doublings: u32,
}

pub fn draw_field(grid: &GridSpec, model: FieldModel, seed: u64, member: u64) -> crate::funcspace::OperatorField {
    let mut rng = member_rng(seed, member);
    match model {
        FieldModel::Iid => random_positive_unit(grid, &mut rng),
        FieldModel::Multiscale => random_multiscale_unit(grid, &mut rng),
    }
}

pub fn draw_member(config: &ResolvedConfig, grid: &GridSpec, member: u64) -> Result<Member> {
    let f = draw_field(grid, config.field, config.seed, member);
    let m = build_martingale(&f);
    let mut t = config.threshold_multiple * m.level(0).sup_norm();
    let mut doublings = 0;
    loop {
        match cuculescu(&m, t) {
            Ok(family) => {
                return Ok(Member {
                    martingale: m,
                    family,
                    threshold: t,
                    doublings,
                })
            }
            Err(Error::ThresholdPrecondition { .. }) if doublings < 60 => {
                t *= 2.0;
                doublings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let f = linear_fit("l", &[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert_eq!(f.residual, 0.0);
        assert!(linear_fit("c", &[1.0, 1.0], &[0.0, 1.0]).is_none());
        let f = linear_fit("n", &[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(f.residual > 0.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn config_resolution() {
        let cfg = parse_config(r#"{"seed": 5, "grid": {"n": 1, "depth": 6, "d": 1}}"#).unwrap();
        let r = ResolvedConfig::resolve(ExperimentKind::Pseudoloc, &cfg, None).unwrap();
        assert_eq!(r.seed, 5);
        assert_eq!(r.grid.quad_refine, 4);
        assert_eq!(r.s, vec![1, 2, 3, 4, 5, 6]);
        let r = ResolvedConfig::resolve(ExperimentKind::Pseudoloc, &cfg, Some(9)).unwrap();
        assert_eq!(r.seed, 9);
        assert!(parse_config(r#"{"sed": 5}"#).is_err());
        assert!(parse_config("{").is_err());
        let bad = parse_config(r#"{"s": []}"#).unwrap();
        assert!(ResolvedConfig::resolve(ExperimentKind::Pseudoloc, &bad, None).is_err());
        let bad = parse_config(r#"{"kernel": {"label": "power", "n": 2, "gamma": 0.5}}"#).unwrap();
        assert!(ResolvedConfig::resolve(ExperimentKind::Phipsi, &bad, None).is_err());
        let bad = parse_config(r#"{"schema_version": 7}"#).unwrap();
        assert!(ResolvedConfig::resolve(ExperimentKind::Phipsi, &bad, None).is_err());
        let bad = parse_config(r#"{"p": [1.0]}"#).unwrap();
        assert!(ResolvedConfig::resolve(ExperimentKind::Lpgrowth, &bad, None).is_err());
    }

    #[test]
    fn verdict_gating() {
        let v = Verdict::at_most("x", -1.0, -0.4);
        assert_eq!(v.status, Status::Pass);
        assert_eq!(v.clone().gated(0.5, 0.2).status, Status::Inconclusive);
        assert_eq!(Verdict::at_most("y", f64::NAN, 1.0).status, Status::Fail);
        assert_eq!(Verdict::within("z", 0.52, 0.5, 0.05).status, Status::Pass);
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![num(1.5), Value::String("x".into())]);
        t.push(vec![num(f64::NAN), num(2.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1.5,x\n,2.0\n");
        assert_eq!(t.column("a"), vec![1.5]);
    }
}
