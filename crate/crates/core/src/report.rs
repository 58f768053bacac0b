//! Pipeline runs: configuration, the machine-readable report and its
//! human summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::complex::{build_complex, cohomology_report, verify_delta_squared, CohomologyReport, DeltaSquaredReport, IntMatrix};
use crate::critical::{choose_orientations, find_rest_points, CriticalError, Eigenvalue, Orientations, RestPoint, SearchConfig};
use crate::derham::{build_fibers, random_form, Bridge, CupCheck, Detection, IdentityCheck, QuadratureConfig, RankCheck, Verdict};
use crate::flow::FlowConfig;
use crate::moduli::{
    basin_partition, corner_catalog, FiberSet, enumerate_instantons, greater_relation, BasinReport, CornerRoot, CornerStratum, Launch,
    ModuliConfig, ModuliError, Skeleton,
};
use crate::scenario::{builtin, builtin_names, check_lyapunov, ChartPoint, ConsistencyReport, DifferentialForm, LabeledPoint, LyapunovCertificate, Scenario, ScenarioError};

pub const TOOL: &str = "morse";

/// Samples for the overlap consistency checks, per chart.
const CONSISTENCY_SAMPLES: usize = 200;
const LYAPUNOV_SAMPLES: usize = 10_000;
const LYAPUNOV_EXCLUSION: f64 = 1e-2;
const LYAPUNOV_MARGIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Internal(_) | RunError::Io(_) => 3,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> RunError {
    RunError::Internal(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioSource {
    Builtin(String),
    File(PathBuf),
}

impl ScenarioSource {
    /// Builtin names win over file paths of the same spelling.
    pub fn parse(text: &str) -> ScenarioSource {
        if builtin_names().contains(&text) {
            ScenarioSource::Builtin(text.to_string())
        } else {
            ScenarioSource::File(PathBuf::from(text))
        }
    }

    /// Loads the scenario in its printed form, so builtin and exported runs agree.
    pub fn load(&self) -> Result<Scenario, ScenarioError> {
        match self {
            ScenarioSource::Builtin(name) => builtin(name)?.canonical(),
            ScenarioSource::File(path) => Scenario::load(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Delta2,
    Stokes,
    Leibniz,
    Cup,
    Detect,
    All,
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Check, String> {
        Ok(match s {
            "delta2" => Check::Delta2,
            "stokes" | "chain_map" => Check::Stokes,
            "leibniz" => Check::Leibniz,
            "cup" => Check::Cup,
            "detect" | "detection" => Check::Detect,
            "all" => Check::All,
            _ => return Err(format!("unknown check `{s}` (delta2, stokes, leibniz, cup, detect, all)")),
        })
    }
}

/// Last pipeline stage to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Critical,
    Instantons,
    Cohomology,
    Verify,
    Run,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    /// Absolute integrator tolerance; the relative one is ten times larger.
    pub tol_ode: f64,
    pub tol_newton: f64,
    pub tol_quad: f64,
    pub tol_verify: f64,
    /// Seeds on each unstable circle.
    pub sweep: usize,
    pub basin_samples: usize,
    pub random_forms: usize,
    pub orientation_trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub check: Check,
    pub stage: Stage,
}

impl RunConfig {
    pub fn new(scenario: ScenarioSource) -> RunConfig {
        RunConfig {
            scenario,
            tol_ode: 1e-10,
            tol_newton: 1e-12,
            tol_quad: 1e-7,
            tol_verify: 1e-6,
            sweep: 2048,
            basin_samples: 10_000,
            random_forms: 10,
            orientation_trials: 20,
            seed: 0,
            out: None,
            check: Check::All,
            stage: Stage::Run,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let tols = [("tol-ode", self.tol_ode), ("tol-newton", self.tol_newton), ("tol-quad", self.tol_quad), ("tol-verify", self.tol_verify)];
        if let Some((name, v)) = tols.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(RunError::Config(format!("{name} must be positive, got {v}")));
        }
        if self.sweep < 16 {
            return Err(RunError::Config(format!("sweep resolution {} is below 16", self.sweep)));
        }
        Ok(())
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig { atol: self.tol_ode, rtol: 10.0 * self.tol_ode, ..FlowConfig::default() }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig { newton_tol: self.tol_newton, ..SearchConfig::default() }
    }

    pub fn moduli(&self) -> ModuliConfig {
        ModuliConfig { flow: self.flow(), sweep_seeds: self.sweep, ..ModuliConfig::default() }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig { tol: self.tol_quad, ..QuadratureConfig::default() }
    }

    fn wants(&self, c: Check) -> bool {
        self.check == Check::All || self.check == c
    }

    fn full(&self) -> bool {
        self.check == Check::All
    }
}

/// Configuration as echoed in the report; the scenario appears by name so
/// that builtin and exported runs produce the same report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub scenario: String,
    pub tol_ode: f64,
    pub tol_newton: f64,
    pub tol_quad: f64,
    pub tol_verify: f64,
    pub sweep: usize,
    pub basin_samples: usize,
    pub random_forms: usize,
    pub orientation_trials: usize,
    pub seed: u64,
    pub check: Check,
    pub stage: Stage,
    pub quadrature: QuadratureConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSection {
    pub name: String,
    pub dim: usize,
    pub charts: Vec<String>,
    pub consistency: ConsistencyReport,
    pub lyapunov: LyapunovCertificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalRow {
    pub id: usize,
    pub chart: String,
    pub coords: Vec<f64>,
    pub f: f64,
    pub index: usize,
    pub eigenvalues: Vec<Eigenvalue>,
    pub residual: f64,
    pub orientation: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalSection {
    pub rest_points: Vec<CriticalRow>,
    pub counts: Vec<usize>,
    pub expected: Option<Vec<usize>>,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstantonRow {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub sign: i8,
    pub determinant: f64,
    pub launch: Launch,
    pub seed_parameter: f64,
    pub mid_point: ChartPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCount {
    pub from: usize,
    pub to: usize,
    pub count: usize,
    pub incidence: i64,
    pub expected: Option<usize>,
    /// Count with the integrator tolerances halved.
    pub halved: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstantonSection {
    pub instantons: Vec<InstantonRow>,
    pub pairs: Vec<PairCount>,
    /// Smallest arrival determinant; transversality requires it nonzero.
    pub min_determinant: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerCatalog {
    pub root: CornerRoot,
    pub strata: Vec<CornerStratum>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerSection {
    pub catalogs: Vec<CornerCatalog>,
    pub dimension_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexSection {
    pub bases: Vec<Vec<usize>>,
    pub incidence: Vec<IntMatrix>,
    pub cohomology: CohomologyReport,
    pub expected_betti: Option<Vec<usize>>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrientationTrial {
    pub seed: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta2Section {
    /// Exact integer check; the tolerance is zero.
    pub tolerance: f64,
    pub report: DeltaSquaredReport,
    pub random_orientations: Vec<OrientationTrial>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlipCheck {
    pub flipped: usize,
    pub invariant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CupSection {
    pub checks: Vec<CupCheck>,
    pub orientation_flips: Vec<FlipCheck>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCheck {
    pub order: usize,
    pub doubled_order: usize,
    pub integrals: usize,
    pub max_change: f64,
    pub worst: Option<String>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentitySection {
    pub delta2: Option<Delta2Section>,
    pub chain_map: Option<Vec<IdentityCheck>>,
    pub leibniz: Option<Vec<IdentityCheck>>,
    pub cup: Option<CupSection>,
    pub int_rank: Option<Vec<RankCheck>>,
    pub convergence: Option<ConvergenceCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionSection {
    pub tolerance: f64,
    pub detections: Vec<Detection>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinSection {
    pub report: BasinReport,
    /// Required classified fraction.
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Rejected,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub stage: String,
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub status: Status,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub rejection: Option<Rejection>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Rejected => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
    pub config: ConfigEcho,
    pub scenario: Option<ScenarioSection>,
    pub critical: Option<CriticalSection>,
    pub instantons: Option<InstantonSection>,
    pub corners: Option<CornerSection>,
    pub complex: Option<ComplexSection>,
    pub identities: Option<IdentitySection>,
    pub detection: Option<DetectionSection>,
    pub basins: Option<BasinSection>,
    pub outcome: Outcome,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// JSON with the timestamp zeroed, for reproducibility comparisons.
    pub fn to_json_without_timestamp(&self) -> String {
        Report { timestamp: 0, ..self.clone() }.to_json()
    }

    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }
}

/// Collects failures and warnings while the pipeline runs.
#[derive(Default)]
struct Tally {
    failures: Vec<String>,
    warnings: Vec<String>,
}

impl Tally {
    fn verdict(&mut self, v: Verdict, what: impl FnOnce() -> String) {
        match v {
            Verdict::Pass => {}
            Verdict::Fail => self.failures.push(what()),
            Verdict::Inconclusive => self.warnings.push(what()),
        }
    }
}

fn verdict_of(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn worst(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Pass,
    })
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Early exit of the pipeline with a structured diagnostic.
enum Stop {
    Rejected(Rejection),
    Internal(RunError),
}

impl From<RunError> for Stop {
    fn from(e: RunError) -> Stop {
        Stop::Internal(e)
    }
}

fn reject(stage: &str, check: &str, detail: impl std::fmt::Display) -> Stop {
    Stop::Rejected(Rejection { stage: stage.into(), check: check.into(), detail: detail.to_string() })
}

fn scenario_rejection(check: &str, e: ScenarioError) -> Stop {
    match e {
        ScenarioError::NonLyapunov { .. } => reject("scenario", "check_lyapunov", e),
        ScenarioError::Inconsistent { .. } => reject("scenario", "check_consistency", e),
        _ => reject("scenario", check, e),
    }
}

fn critical_rejection(e: CriticalError) -> Stop {
    match e {
        CriticalError::Eval(_) | CriticalError::GridTooCoarse(_) => Stop::Internal(internal(e)),
        _ => reject("critical", "certify", e),
    }
}

fn moduli_rejection(e: ModuliError) -> Stop {
    match e {
        ModuliError::Unresolved { .. } | ModuliError::SweepResolution { .. } | ModuliError::NotGapOne { .. } => {
            reject("moduli", "transversality", e)
        }
        ModuliError::Critical(c) => critical_rejection(c),
        _ => Stop::Internal(internal(e)),
    }
}

/// Runs the pipeline scenario → critical → moduli → complex → bridge up to
/// `cfg.stage`. Certification failures end the run with a rejection.
pub fn run(cfg: &RunConfig) -> Result<Report, RunError> {
    cfg.validate()?;
    let mut report = Report {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: now(),
        config: ConfigEcho {
            scenario: match &cfg.scenario {
                ScenarioSource::Builtin(n) => n.clone(),
                ScenarioSource::File(p) => p.display().to_string(),
            },
            tol_ode: cfg.tol_ode,
            tol_newton: cfg.tol_newton,
            tol_quad: cfg.tol_quad,
            tol_verify: cfg.tol_verify,
            sweep: cfg.sweep,
            basin_samples: cfg.basin_samples,
            random_forms: cfg.random_forms,
            orientation_trials: cfg.orientation_trials,
            seed: cfg.seed,
            check: cfg.check,
            stage: cfg.stage,
            quadrature: cfg.quadrature(),
        },
        scenario: None,
        critical: None,
        instantons: None,
        corners: None,
        complex: None,
        identities: None,
        detection: None,
        basins: None,
        outcome: Outcome { status: Status::Pass, failures: Vec::new(), warnings: Vec::new(), rejection: None },
    };
    let mut tally = Tally::default();
    match pipeline(cfg, &mut report, &mut tally) {
        Ok(()) => {}
        Err(Stop::Rejected(r)) => report.outcome.rejection = Some(r),
        Err(Stop::Internal(e)) => return Err(e),
    }
    report.outcome.status = if report.outcome.rejection.is_some() {
        Status::Rejected
    } else if tally.failures.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    };
    report.outcome.failures = tally.failures;
    report.outcome.warnings = tally.warnings;
    Ok(report)
}

fn pipeline(cfg: &RunConfig, report: &mut Report, tally: &mut Tally) -> Result<(), Stop> {
    let s = cfg.scenario.load().map_err(|e| scenario_rejection("load", e))?;
    report.config.scenario = s.name.clone();
    let consistency = s.check_consistency(CONSISTENCY_SAMPLES, cfg.seed).map_err(|e| scenario_rejection("check_consistency", e))?;

    let rest = find_rest_points(&s, &cfg.search()).map_err(critical_rejection)?;
    let exclusions: Vec<ChartPoint> = rest.iter().map(|r| r.point.clone()).collect();
    let lyapunov = check_lyapunov(&s, LYAPUNOV_SAMPLES, LYAPUNOV_EXCLUSION, &exclusions, LYAPUNOV_MARGIN, cfg.seed)
        .map_err(|e| scenario_rejection("check_lyapunov", e))?;
    let orientations = choose_orientations(&rest);
    if cfg.full() {
        report.scenario = Some(ScenarioSection {
            name: s.name.clone(),
            dim: s.dim,
            charts: s.charts.iter().map(|c| c.id.clone()).collect(),
            consistency,
            lyapunov,
        });
        let sec = critical_section(&s, &rest, &orientations, cfg);
        tally.verdict(sec.verdict, || format!("rest points: counts {:?}, expected {}, worst residual {:e}", sec.counts, shown(&sec.expected), sec.worst_residual));
        report.critical = Some(sec);
    }
    if cfg.stage == Stage::Critical {
        return Ok(());
    }

    let mcfg = cfg.moduli();
    let sk = Skeleton::build(&s, rest, orientations, mcfg).map_err(moduli_rejection)?;
    if let Some(bad) = sk.instantons.iter().find(|i| i.degenerate()) {
        return Err(reject(
            "moduli",
            "transversality",
            format!("instanton {} from {} to {} has arrival determinant {:e}", bad.id, bad.from, bad.to, bad.determinant),
        ));
    }
    if cfg.full() {
        let sec = instanton_section(&s, &sk, cfg).map_err(moduli_rejection)?;
        for p in sec.pairs.iter().filter(|p| p.verdict != Verdict::Pass) {
            tally.failures.push(format!(
                "instantons {} -> {}: count {}, expected {:?}, halved tolerance {}",
                p.from, p.to, p.count, p.expected, p.halved
            ));
        }
        report.instantons = Some(sec);
        let sec = corner_section(&sk);
        if !sec.dimension_ok {
            tally.failures.push("corner strata: dimension mismatch".into());
        }
        report.corners = Some(sec);
    }
    if cfg.stage == Stage::Instantons {
        return Ok(());
    }

    let complex = build_complex(&sk).map_err(|e| Stop::Internal(internal(e)))?;
    let mut identities = IdentitySection::default();
    if cfg.full() {
        let cohomology = cohomology_report(&s, &sk, &complex).map_err(|e| Stop::Internal(internal(e)))?;
        let expected_betti = s.ground_truth.as_ref().map(|g| g.betti.clone());
        let ok = cohomology.inequalities.all_hold()
            && cohomology.oracle_match != Some(false)
            && expected_betti.as_ref().is_none_or(|b| *b == cohomology.betti);
        let verdict = verdict_of(ok);
        tally.verdict(verdict, || {
            format!("cohomology: betti {:?}, oracle {}, expected {}", cohomology.betti, shown(&cohomology.oracle), shown(&expected_betti))
        });
        report.complex = Some(ComplexSection {
            bases: complex.bases.clone(),
            incidence: complex.incidence.clone(),
            cohomology,
            expected_betti,
            verdict,
        });
    }
    if cfg.wants(Check::Delta2) {
        let rep = verify_delta_squared(&complex);
        let random_orientations = (0..cfg.orientation_trials as u64)
            .map(|k| {
                let seed = cfg.seed.wrapping_add(k);
                let re = sk.reoriented(&s, Orientations::random(sk.rest.len(), seed)).map_err(moduli_rejection)?;
                let c = build_complex(&re).map_err(|e| Stop::Internal(internal(e)))?;
                Ok(OrientationTrial { seed, holds: verify_delta_squared(&c).holds })
            })
            .collect::<Result<Vec<_>, Stop>>()?;
        let verdict = verdict_of(rep.holds && random_orientations.iter().all(|t| t.holds));
        tally.verdict(verdict, || format!("delta squared: {} failing pairs", rep.failures.len()));
        identities.delta2 = Some(Delta2Section { tolerance: 0.0, report: rep, random_orientations, verdict });
    }
    if cfg.stage == Stage::Cohomology || cfg.check == Check::Delta2 {
        if identities.delta2.is_some() {
            report.identities = Some(identities);
        }
        return Ok(());
    }

    let quad = cfg.quadrature();
    let fibers = build_fibers(&s, &sk, &quad).map_err(|e| Stop::Internal(internal(e)))?;
    let bridge = Bridge::new(&s, &sk, &fibers, quad).map_err(|e| Stop::Internal(internal(e)))?;
    verify(cfg, &s, &sk, &bridge, &fibers, &mut identities, report, tally)?;
    if identities.chain_map.is_some() || identities.leibniz.is_some() || identities.cup.is_some() || identities.delta2.is_some() {
        report.identities = Some(identities);
    }

    if cfg.stage == Stage::Run && cfg.full() {
        let rep = basin_partition(&s, &sk.rest, cfg.basin_samples, cfg.seed, cfg.flow()).map_err(|e| Stop::Internal(internal(e)))?;
        let verdict = verdict_of(rep.complete());
        tally.verdict(verdict, || format!("basins: {} of {} points classified", rep.classified, rep.samples));
        report.basins = Some(BasinSection { report: rep, tolerance: 1.0, verdict });
    }
    Ok(())
}

fn critical_section(s: &Scenario, rest: &[RestPoint], o: &Orientations, cfg: &RunConfig) -> CriticalSection {
    let rows: Vec<CriticalRow> = rest
        .iter()
        .map(|r| CriticalRow {
            id: r.id,
            chart: s.charts[r.point.chart].id.clone(),
            coords: r.point.coords.clone(),
            f: r.f,
            index: r.index,
            eigenvalues: r.eigenvalues.clone(),
            residual: r.residual,
            orientation: o.signs[r.id],
        })
        .collect();
    let counts = crate::critical::counts_per_index(rest, s.dim);
    let expected = s.ground_truth.as_ref().map(|g| g.rest_points_per_index.clone());
    let worst_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let ok = expected.as_ref().is_none_or(|e| *e == counts) && worst_residual < cfg.tol_newton;
    CriticalSection { rest_points: rows, counts, expected, worst_residual, tolerance: cfg.tol_newton, verdict: verdict_of(ok) }
}

/// Rest point matching a ground-truth label.
fn locate(s: &Scenario, rest: &[RestPoint], p: &LabeledPoint) -> Option<usize> {
    let chart = s.charts.iter().position(|c| c.id == p.chart)?;
    let q = ChartPoint::new(chart, p.coords.clone());
    rest.iter().find(|r| s.distance(&r.point, &q) < 1e-6).map(|r| r.id)
}

fn instanton_section(s: &Scenario, sk: &Skeleton, cfg: &RunConfig) -> Result<InstantonSection, ModuliError> {
    let instantons = sk
        .instantons
        .iter()
        .map(|i| InstantonRow {
            id: i.id,
            from: i.from,
            to: i.to,
            sign: i.sign,
            determinant: i.determinant,
            launch: i.launch,
            seed_parameter: i.seed_parameter,
            mid_point: i.mid_point.clone(),
        })
        .collect();
    let expected: Vec<(usize, usize, usize)> = s
        .ground_truth
        .iter()
        .flat_map(|g| &g.instantons)
        .filter_map(|c| Some((locate(s, &sk.rest, &c.from)?, locate(s, &sk.rest, &c.to)?, c.count)))
        .collect();
    let has_truth = s.ground_truth.as_ref().is_some_and(|g| !g.instantons.is_empty());
    let halved_cfg = ModuliConfig { flow: cfg.flow().halved(), ..sk.cfg };
    let pairs = sk
        .enumerated
        .iter()
        .map(|&(x, y)| {
            let count = sk.between(x, y).count();
            let halved = enumerate_instantons(s, &sk.rest, &sk.orientations, x, y, &halved_cfg)?.len();
            let expected = has_truth.then(|| expected.iter().find(|e| e.0 == x && e.1 == y).map_or(0, |e| e.2));
            let ok = halved == count && expected.is_none_or(|e| e == count);
            Ok(PairCount { from: x, to: y, count, incidence: sk.incidence(x, y), expected, halved, verdict: verdict_of(ok) })
        })
        .collect::<Result<Vec<_>, ModuliError>>()?;
    let min_determinant = sk.instantons.iter().map(|i| i.determinant.abs()).fold(f64::INFINITY, f64::min);
    let verdict = worst(pairs.iter().map(|p| p.verdict));
    Ok(InstantonSection { instantons, pairs, min_determinant: if min_determinant.is_finite() { min_determinant } else { 0.0 }, verdict })
}

fn corner_section(sk: &Skeleton) -> CornerSection {
    let rel = greater_relation(sk);
    let m = sk.rest.len();
    let roots = (0..m)
        .flat_map(|x| [CornerRoot::Unstable(x), CornerRoot::Stable(x)])
        .chain((0..m).flat_map(|x| (0..m).map(move |y| (x, y))).filter(|&(x, y)| rel.gt(x, y)).map(|(x, y)| CornerRoot::Pair(x, y)));
    let catalogs: Vec<CornerCatalog> = roots.map(|root| CornerCatalog { root, strata: corner_catalog(sk, root) }).collect();
    let dimension_ok = catalogs.iter().all(|c| c.strata.iter().all(CornerStratum::dimension_ok));
    CornerSection { catalogs, dimension_ok }
}

#[allow(clippy::too_many_arguments)]
fn verify(
    cfg: &RunConfig,
    s: &Scenario,
    sk: &Skeleton,
    b: &Bridge<'_>,
    fibers: &[FiberSet],
    identities: &mut IdentitySection,
    report: &mut Report,
    tally: &mut Tally,
) -> Result<(), Stop> {
    let bridge_err = |e: crate::derham::BridgeError| Stop::Internal(internal(e));
    let tol = cfg.tol_verify;
    let n = s.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let randoms = (0..cfg.random_forms)
        .map(|k| {
            let deg = rng.gen_range(0..n);
            random_form(s, deg, &mut rng, &format!("random{k}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(bridge_err)?;

    if cfg.wants(Check::Stokes) {
        let mut checks = Vec::new();
        for w in s.forms.iter().filter(|w| w.degree < n).chain(&randoms) {
            checks.push(b.verify_chain_map(w, tol).map_err(bridge_err)?);
        }
        for c in &checks {
            tally.verdict(c.verdict, || format!("{}: residual {:e}, tolerance {:e}", c.name, c.residual, c.tolerance));
        }
        identities.chain_map = Some(checks);
    }

    if cfg.wants(Check::Leibniz) {
        let mut checks = Vec::new();
        for k in 0..cfg.random_forms {
            let r = rng.gen_range(0..n);
            let p = rng.gen_range(0..n - r);
            let w = random_form(s, r, &mut rng, &format!("random{k}")).map_err(bridge_err)?;
            let f: Vec<f64> = (0..b.complex.bases[p].len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            checks.push(b.verify_leibniz(&w, &f, p, tol).map_err(bridge_err)?);
        }
        for c in &checks {
            tally.verdict(c.verdict, || format!("{}: residual {:e}, tolerance {:e}", c.name, c.residual, c.tolerance));
        }
        identities.leibniz = Some(checks);
    }

    let gens: Vec<&DifferentialForm> = s.forms.iter().filter(|f| f.generator).collect();
    let pairs: Vec<(&DifferentialForm, &DifferentialForm)> =
        gens.iter().flat_map(|&a| gens.iter().map(move |&c| (a, c))).filter(|(a, c)| a.degree + c.degree <= n).collect();
    let cups_for = |bridge: &Bridge<'_>| -> Result<Vec<CupCheck>, Stop> {
        pairs.iter().map(|(a, c)| bridge.verify_cup_diagram(a, c, tol).map_err(bridge_err)).collect()
    };
    let needs_cups = cfg.wants(Check::Cup) || cfg.wants(Check::Detect);
    let cups = if needs_cups { cups_for(b)? } else { Vec::new() };

    if cfg.wants(Check::Cup) {
        let mut flips = Vec::new();
        for x in 0..sk.rest.len() {
            let re = sk.reoriented(s, sk.orientations.flipped(x)).map_err(moduli_rejection)?;
            let rb = Bridge::new(s, &re, fibers, b.quad).map_err(bridge_err)?;
            let flipped = cups_for(&rb)?;
            let invariant = cups
                .iter()
                .zip(&flipped)
                .all(|(a, c)| a.verdict == c.verdict && a.product_nontrivial == c.product_nontrivial);
            flips.push(FlipCheck { flipped: x, invariant });
        }
        for c in &cups {
            tally.verdict(c.verdict, || format!("{}: residual {:e}, class equal {}", c.values.name, c.values.residual, shown(&c.class_equal)));
        }
        for f in flips.iter().filter(|f| !f.invariant) {
            tally.failures.push(format!("cup verdicts change when orientation of rest point {} flips", f.flipped));
        }
        let verdict = worst(cups.iter().map(|c| c.verdict).chain(flips.iter().map(|f| verdict_of(f.invariant))));
        identities.cup = Some(CupSection { checks: cups.clone(), orientation_flips: flips, verdict });
    }

    if cfg.wants(Check::Detect) {
        let lefts: Vec<&DifferentialForm> = pairs.iter().map(|(a, _)| *a).collect();
        let detections = b.detect(&cups, &lefts, tol).map_err(bridge_err)?;
        for d in &detections {
            tally.verdict(d.verdict, || format!("detection {} at gap {}: stratum of size {}", d.product, d.gap, d.stratum_size));
        }
        let verdict = worst(detections.iter().map(|d| d.verdict));
        report.detection = Some(DetectionSection { tolerance: tol, detections, verdict });
    }

    if cfg.full() {
        let (betti, _) = crate::complex::betti_numbers(&b.complex);
        let ranks = betti.iter().enumerate().map(|(r, &br)| b.int_rank(r, br, tol)).collect::<Result<Vec<_>, _>>().map_err(bridge_err)?;
        for c in &ranks {
            tally.verdict(c.verdict, || format!("rank of Int in degree {}: {}, betti {}", c.degree, shown(&c.rank), c.betti));
        }
        identities.int_rank = Some(ranks);

        let q2 = b.quad.doubled();
        let fibers2 = build_fibers(s, sk, &q2).map_err(bridge_err)?;
        let b2 = Bridge::new(s, sk, &fibers2, q2).map_err(bridge_err)?;
        // library and random forms with their exterior derivatives: every
        // integral entering the identity checks
        let derived = s
            .forms
            .iter()
            .chain(&randoms)
            .filter(|w| w.degree < n)
            .map(|w| w.exterior_derivative().map(|d| d.renamed(format!("d({})", w.name))))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bridge_err(e.into()))?;
        let forms: Vec<&DifferentialForm> = s.forms.iter().chain(&randoms).chain(&derived).collect();
        let t1 = b.integral_table(&forms).map_err(bridge_err)?;
        let t2 = b2.integral_table(&forms).map_err(bridge_err)?;
        let (max_change, worst_label) = t1
            .iter()
            .zip(&t2)
            .map(|((label, v1), (_, v2))| ((v1 - v2).abs(), label))
            .fold((0.0, None), |acc, (d, l)| if d > acc.0 { (d, Some(l.clone())) } else { acc });
        let verdict = verdict_of(max_change < cfg.tol_quad);
        tally.verdict(verdict, || format!("quadrature doubling changes {worst_label:?} by {max_change:e}"));
        identities.convergence = Some(ConvergenceCheck {
            order: b.quad.order,
            doubled_order: q2.order,
            integrals: t1.len(),
            max_change,
            worst: worst_label,
            tolerance: cfg.tol_quad,
            verdict,
        });
    }
    Ok(())
}

/// Writes the builtin scenarios as `<name>.json` into `dir`.
pub fn emit_scenarios(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir)?;
    builtin_names()
        .iter()
        .map(|name| {
            let s = builtin(name).map_err(internal)?;
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, s.to_json() + "\n")?;
            Ok(path)
        })
        .collect()
}

/// `none` for a missing value, the debug form otherwise.
fn shown<T: std::fmt::Debug>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| format!("{x:?}"))
}

fn mark(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "FAIL",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn max_residual(checks: &[IdentityCheck]) -> f64 {
    checks.iter().map(|c| c.residual).fold(0.0, f64::max)
}

/// Human-readable table of the section verdicts.
pub fn summary(r: &Report) -> String {
    let mut out = String::new();
    let mut row = |name: &str, verdict: &str, detail: String| {
        let _ = writeln!(out, "{name:<14} {verdict:<13} {detail}");
    };
    row("scenario", "", r.config.scenario.clone());
    if let Some(sc) = &r.scenario {
        row("lyapunov", "pass", format!("{} samples, worst df(X) {:.3e}", sc.lyapunov.samples, sc.lyapunov.worst));
    }
    if let Some(c) = &r.critical {
        row("rest points", mark(c.verdict), format!("counts {:?}, worst residual {:.1e}", c.counts, c.worst_residual));
    }
    if let Some(i) = &r.instantons {
        row("instantons", mark(i.verdict), format!("{} total over {} pairs, min |det| {:.2e}", i.instantons.len(), i.pairs.len(), i.min_determinant));
    }
    if let Some(c) = &r.corners {
        let n: usize = c.catalogs.iter().map(|k| k.strata.len()).sum();
        row("corners", mark(verdict_of(c.dimension_ok)), format!("{n} strata in {} catalogs", c.catalogs.len()));
    }
    if let Some(c) = &r.complex {
        row("cohomology", mark(c.verdict), format!("betti {:?}, oracle {}", c.cohomology.betti, shown(&c.cohomology.oracle)));
    }
    if let Some(id) = &r.identities {
        if let Some(d) = &id.delta2 {
            row("delta^2", mark(d.verdict), format!("exact, {} random orientations", d.random_orientations.len()));
        }
        if let Some(c) = &id.chain_map {
            row("chain map", mark(worst(c.iter().map(|x| x.verdict))), format!("{} forms, max residual {:.2e}", c.len(), max_residual(c)));
        }
        if let Some(c) = &id.leibniz {
            row("leibniz", mark(worst(c.iter().map(|x| x.verdict))), format!("{} pairs, max residual {:.2e}", c.len(), max_residual(c)));
        }
        if let Some(c) = &id.cup {
            let res = c.checks.iter().map(|x| x.values.residual).fold(0.0, f64::max);
            row("cup", mark(c.verdict), format!("{} products, max residual {:.2e}", c.checks.len(), res));
        }
        if let Some(c) = &id.int_rank {
            row("int rank", mark(worst(c.iter().map(|x| x.verdict))), format!("ranks {}", c.iter().map(|x| shown(&x.rank)).collect::<Vec<_>>().join(" ")));
        }
        if let Some(c) = &id.convergence {
            row("convergence", mark(c.verdict), format!("{} integrals, max change {:.2e}", c.integrals, c.max_change));
        }
    }
    if let Some(d) = &r.detection {
        row("detection", mark(d.verdict), format!("{} nontrivial products", d.detections.len()));
    }
    if let Some(b) = &r.basins {
        row("basins", mark(b.verdict), format!("{} of {} classified", b.report.classified, b.report.samples));
    }
    let status = match r.outcome.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Rejected => "REJECTED",
    };
    row("outcome", status, format!("{} failures, {} warnings", r.outcome.failures.len(), r.outcome.warnings.len()));
    if let Some(rej) = &r.outcome.rejection {
        let _ = writeln!(out, "rejected at {} ({}): {}", rej.stage, rej.check, rej.detail);
    }
    for f in &r.outcome.failures {
        let _ = writeln!(out, "failure: {f}");
    }
    for w in &r.outcome.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
