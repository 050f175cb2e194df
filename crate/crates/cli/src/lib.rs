//! Subcommands of the `reserve` binary.
//!
//! Each command writes its report to a caller-supplied writer and returns the
//! process exit code: 0 on success, 1 for usage, I/O or schema errors and 2
//! when the market admits arbitrage.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reserve_core::market::{load_claims, load_market};
use reserve_core::measures::{
    check_compactness, density_bounds, most_interior_measure, superreplication_price,
};
use reserve_core::pricing::{convergence_sweep, PriceCurve, PricingConfig, SweepMode};
use reserve_core::utility::{
    check_asymptotic_elasticity, check_elasticity, check_limit_assumptions,
    check_risk_aversion_divergence, log_grid,
};
use reserve_core::{Claim, ScenarioTree, UtilityFamily};

pub const CONFIG_FORMAT: &str = "reserve-experiment/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] reserve_core::Error),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(reserve_core::Error::Arbitrage) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKindSpec {
    Exponential,
    Power,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKindSpec,
    pub schedule: Vec<f64>,
}

impl FamilySpec {
    pub fn build(&self) -> CliResult<UtilityFamily> {
        let f = match self.kind {
            FamilyKindSpec::Exponential => UtilityFamily::exponential(self.schedule.clone()),
            FamilyKindSpec::Power => UtilityFamily::power(self.schedule.clone()),
        }?;
        if !f.is_increasing() {
            return Err(CliError::Config(
                "schedule must be strictly increasing".into(),
            ));
        }
        Ok(f)
    }
}

fn default_price_tol() -> f64 {
    1e-4
}

fn default_u_tol() -> f64 {
    1e-8
}

fn default_mode() -> SweepMode {
    SweepMode::Raw
}

fn default_threshold() -> f64 {
    100.0
}

/// Experiment description. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: String,
    pub market: PathBuf,
    pub claims: PathBuf,
    pub claim: String,
    pub family: FamilySpec,
    pub z: f64,
    /// Wealth level for the limit diagnostics; defaults to `z`.
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default = "default_price_tol")]
    pub price_tol: f64,
    #[serde(default = "default_u_tol")]
    pub u_tol: f64,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Level the last risk aversion must exceed in `check`.
    #[serde(default = "default_threshold")]
    pub risk_threshold: f64,
}

/// A config with its inputs loaded and validated.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub tree: ScenarioTree,
    pub claim: Claim,
    pub family: UtilityFamily,
    pub output: Option<PathBuf>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_tree(path: &Path) -> CliResult<ScenarioTree> {
    Ok(load_market(&read(path)?)?)
}

pub fn load_claim(tree: &ScenarioTree, path: &Path, name: &str) -> CliResult<Claim> {
    load_claims(&read(path)?, tree)?
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| CliError::Config(format!("claim {name:?} not found in {}", path.display())))
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let config: ExperimentConfig = serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.format != CONFIG_FORMAT {
            return Err(CliError::Config(format!(
                "unsupported format {:?}, expected {CONFIG_FORMAT:?}",
                config.format
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let tree = load_tree(&resolve(&config.market))?;
        let claim = load_claim(&tree, &resolve(&config.claims), &config.claim)?;
        let family = config.family.build()?;
        let output = config.output.as_deref().map(resolve);
        Ok(Self {
            config,
            tree,
            claim,
            family,
            output,
        })
    }

    pub fn pricing(&self) -> PricingConfig {
        PricingConfig::with_tolerances(self.config.price_tol, self.config.u_tol)
    }

    pub fn x0(&self) -> f64 {
        self.config.x0.unwrap_or(self.config.z)
    }
}

/// Runs a command body and maps its error to an exit code, reporting it on `err`.
pub fn run<F>(err: &mut dyn Write, body: F) -> i32
where
    F: FnOnce() -> CliResult<i32>,
{
    match body() {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Superreplication price, optimal measure, primal strategy and duality gap.
pub fn cmd_superrep(tree: &ScenarioTree, claim: &Claim, out: &mut dyn Write) -> CliResult<i32> {
    let s = superreplication_price(tree, claim)?;
    writeln!(out, "claim          {}", claim.name())?;
    writeln!(out, "price          {:.17}", s.price)?;
    writeln!(out, "capital        {:.17}", s.initial_capital)?;
    writeln!(out, "duality gap    {:e}", s.duality_gap)?;
    writeln!(
        out,
        "measure        {}",
        if s.is_closure_element() {
            "boundary of the polytope (closure element, not equivalent to P)"
        } else {
            "equivalent to P"
        }
    )?;
    for (w, q) in tree.terminals().zip(s.optimal_measure.weights()) {
        writeln!(out, "  q[{}] = {q:.17}", tree.id(w))?;
    }
    writeln!(out, "strategy")?;
    for (k, node) in tree.interior().enumerate() {
        let h: Vec<String> = s
            .strategy
            .holding_at(k)
            .iter()
            .map(|v| format!("{v:.17}"))
            .collect();
        writeln!(out, "  phi[{}] = [{}]", tree.id(node), h.join(", "))?;
    }
    Ok(EXIT_OK)
}

fn sweep(exp: &Experiment) -> CliResult<PriceCurve> {
    Ok(convergence_sweep(
        &exp.tree,
        &exp.family,
        exp.config.z,
        &exp.claim,
        exp.config.mode,
        &exp.pricing(),
    )?)
}

/// Indifference prices along the schedule as a table.
pub fn cmd_price(exp: &Experiment, out: &mut dyn Write) -> CliResult<i32> {
    let curve = sweep(exp)?;
    writeln!(out, "superreplication price {:.17}", curve.superrep)?;
    writeln!(
        out,
        "{:>3} {:>12} {:>22} {:>22}",
        "n", "alpha", "price", "gap"
    )?;
    for p in &curve.points {
        writeln!(
            out,
            "{:>3} {:>12} {:>22.17} {:>22.17}",
            p.n, p.alpha, p.price, p.gap
        )?;
    }
    write_verdict(&curve, out)?;
    Ok(EXIT_OK)
}

fn write_verdict(curve: &PriceCurve, out: &mut dyn Write) -> CliResult<()> {
    let v = &curve.verdict;
    writeln!(out, "final gap {:e}", v.final_gap)?;
    writeln!(out, "gap nonincreasing {}", v.nonincreasing)?;
    writeln!(out, "gap strictly decreasing {}", v.strictly_decreasing)?;
    match v.log_slope {
        Some(s) => writeln!(out, "log-log slope over last points {s:.4}")?,
        None => writeln!(out, "log-log slope unavailable")?,
    }
    Ok(())
}

/// Writes the sweep CSV to `out_path` (or the config's output) atomically.
pub fn cmd_sweep(exp: &Experiment, out_path: Option<&Path>, out: &mut dyn Write) -> CliResult<i32> {
    let path = out_path
        .map(Path::to_path_buf)
        .or_else(|| exp.output.clone())
        .ok_or_else(|| CliError::Config("no output path: pass --out or set \"output\"".into()))?;
    let curve = sweep(exp)?;
    curve.write_csv_atomic(&path)?;
    writeln!(
        out,
        "wrote {} rows to {}",
        curve.points.len(),
        path.display()
    )?;
    write_verdict(&curve, out)?;
    Ok(EXIT_OK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Evidence,
}

#[derive(Clone, Debug)]
pub struct CheckLine {
    pub status: Status,
    pub name: &'static str,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Evidence => "EVIDENCE",
        };
        write!(f, "{tag:<8} {:<22} {}", self.name, self.detail)
    }
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Runs every diagnostic on `family` over `tree`.
///
/// Checks that cannot be evaluated (for instance compactness without an
/// equivalent martingale measure) are reported as failures.
pub fn check_report(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    x0: f64,
    risk_threshold: f64,
) -> Vec<CheckLine> {
    let mut lines = Vec::new();
    let mut push = |status, name, detail: String| {
        lines.push(CheckLine {
            status,
            name,
            detail,
        })
    };

    let q0 = most_interior_measure(tree);
    match &q0 {
        Ok(Some(_)) => push(
            Status::Pass,
            "no-arbitrage",
            "strictly positive martingale measure found".into(),
        ),
        Ok(None) => push(
            Status::Fail,
            "no-arbitrage",
            "no martingale measure: the market admits arbitrage".into(),
        ),
        Err(e) => push(Status::Fail, "no-arbitrage", e.to_string()),
    }

    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    match check_risk_aversion_divergence(family, &grid, risk_threshold) {
        Ok(r) => push(
            verdict(r.holds),
            "risk-aversion",
            format!(
                "increasing along schedule: {}; min last r = {} at x = {} (threshold {})",
                r.increasing, r.min_last, r.worst_x, r.threshold
            ),
        ),
        Err(e) => push(Status::Fail, "risk-aversion", e.to_string()),
    }

    let ys = log_grid(-10, 10);
    match check_elasticity(family, (0.5, 2.0), &ys, &[0.5, 0.75, 1.0, 1.5, 2.0]) {
        Ok(r) => push(
            verdict(r.holds),
            "conjugate-elasticity",
            format!(
                "grid evidence on lambda in [0.5, 2], {} points: C1 = {}, C2 = {:.6}, C3 = {:.6}; worst slack {:e} at n = {}, lambda = {}, y = {}",
                r.grid_points, r.constants.c1, r.constants.c2, r.constants.c3,
                r.worst.slack, r.worst.n, r.worst.lambda, r.worst.y
            ),
        ),
        Err(e) => push(Status::Fail, "conjugate-elasticity", e.to_string()),
    }

    let last = family.len() - 1;
    match check_asymptotic_elasticity(family, last, 10.0) {
        Ok((up, low)) => push(
            Status::Evidence,
            "asymptotic-elasticity",
            format!("x U'(x) / U(x) at n = {last}: {up:e} at x = 10, {low:e} at x = -10"),
        ),
        Err(e) => push(
            Status::Evidence,
            "asymptotic-elasticity",
            format!("not evaluated: {e}"),
        ),
    }

    match &q0 {
        Ok(Some(q)) => {
            let (lo, hi) = density_bounds(tree, q);
            match check_compactness(tree, q, family) {
                Ok(r) => push(
                    verdict(r.bounded),
                    "compactness",
                    format!(
                        "sup over schedule of E|V_n(dQ0/dP)| = {:e}; dQ0/dP in [{lo:.6}, {hi:.6}]",
                        r.sup
                    ),
                ),
                Err(e) => push(Status::Fail, "compactness", e.to_string()),
            }
        }
        _ => push(
            Status::Fail,
            "compactness",
            "no equivalent martingale measure".into(),
        ),
    }

    match check_limit_assumptions(family, x0, &[0.25, 0.5, 1.0, 2.0, 4.0]) {
        Ok(r) => push(
            verdict(r.holds),
            "limit",
            format!(
                "x0 = {}: U_n'(x0) -> {}, U_n(x0) -> {}; stabilized {}; conjugate deviations eventually decreasing {}; last max deviation {:e}; marginal collapse {}",
                r.x0, r.alpha, r.beta, r.stabilized, r.eventually_decreasing,
                r.last_max_deviation(), r.marginal_collapse
            ),
        ),
        Err(e) => push(Status::Fail, "limit", e.to_string()),
    }
    lines
}

/// Prints the diagnostics; exit code 0 iff nothing fails.
pub fn cmd_check(exp: &Experiment, out: &mut dyn Write) -> CliResult<i32> {
    let lines = check_report(&exp.tree, &exp.family, exp.x0(), exp.config.risk_threshold);
    for l in &lines {
        writeln!(out, "{l}")?;
    }
    Ok(if lines.iter().any(|l| l.status == Status::Fail) {
        EXIT_USAGE
    } else {
        EXIT_OK
    })
}
