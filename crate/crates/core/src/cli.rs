//! Config parsing and the five pipelines behind the `ergolab` binary.
//!
//! Every run writes its artifacts and `manifest.json` into the output
//! directory. Exit codes: 0 when all checks pass, 1 when an exact check
//! fails or the construction is impossible within its caps, 2 for
//! configuration and IO errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::alpern::{self, AlpernError, AlpernSolution, SolutionDoc, Wiring};
use crate::check::Check;
use crate::cycle_ir::{NodeView, SystemIR};
use crate::krengel::{self, KrengelError, KrengelWitness};
use crate::podvigin::{self, ComponentSpec, EpsSchedule, PodviginError, StageParams};
use crate::rates::{RateFunction, RateSpec};
use crate::rational::{parse_q, q_u64, Q};
use crate::report::{self, RunManifest, Table, Verdict};

pub const THREADS_ENV: &str = "ERGOLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Krengel,
    Podvigin,
    Alpern,
    Verify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Krengel => "krengel",
            Command::Podvigin => "podvigin",
            Command::Alpern => "alpern",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "krengel" => Command::Krengel,
            "podvigin" => Command::Podvigin,
            "alpern" => Command::Alpern,
            "verify" => Command::Verify,
            "report" => Command::Report,
            _ => return None,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn q_field(name: &str, s: &str) -> Result<Q, CliError> {
    parse_q(s).map_err(|e| CliError::Config(format!("{name}: {e}")))
}

fn q_list(name: &str, v: &[String]) -> Result<Vec<Q>, CliError> {
    v.iter()
        .enumerate()
        .map(|(i, s)| q_field(&format!("{name}[{i}]"), s))
        .collect()
}

fn rate_of(spec: &RateSpec) -> Result<RateFunction, CliError> {
    RateFunction::try_from(spec).map_err(|e| CliError::Config(format!("rate: {e}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrengelConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub rate: RateSpec,
    /// Number of tower families `J`.
    pub families: usize,
    /// Growth targets `M_j`; defaults to `M_j = j`.
    #[serde(default)]
    pub growth: Option<Vec<String>>,
    #[serde(default)]
    pub tol: Option<String>,
    #[serde(default)]
    pub height_cap: Option<u64>,
    #[serde(default)]
    pub n_cap: Option<u64>,
    #[serde(default)]
    pub wiring: Wiring,
}

pub const DEFAULT_TOL: (i64, i64) = (1, 10_000);

impl KrengelConfig {
    fn tol(&self) -> Result<Q, CliError> {
        match &self.tol {
            Some(s) => q_field("tol", s),
            None => Ok(Q::new(DEFAULT_TOL.0.into(), DEFAULT_TOL.1.into())),
        }
    }

    fn plan(&self) -> Result<Result<krengel::KrengelPlan, KrengelError>, CliError> {
        let rate = rate_of(&self.rate)?;
        let growth = self.growth.as_deref().map(|g| q_list("growth", g)).transpose()?;
        let plan = krengel::select_heights(
            &rate,
            self.families,
            growth,
            self.height_cap.unwrap_or(krengel::DEFAULT_HEIGHT_CAP),
        );
        match plan {
            Err(e @ (KrengelError::TooFewFamilies(_) | KrengelError::BadGrowth { .. } | KrengelError::Rate(_))) => {
                Err(cfg_err(e))
            }
            other => Ok(other),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodviginConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub rate: RateSpec,
    /// Masses of `A_0..A_J`.
    pub masses: Vec<String>,
    /// `ε_j = (c_j − c)/eps_divisor`; default 8.
    #[serde(default)]
    pub eps_divisor: Option<String>,
    #[serde(default)]
    pub multiplier: Option<u64>,
    #[serde(default)]
    pub retry_cap: Option<u64>,
}

impl PodviginConfig {
    fn parts(&self) -> Result<(ComponentSpec, StageParams), CliError> {
        let masses = q_list("masses", &self.masses)?;
        let spec = ComponentSpec::new(masses, self.multiplier.unwrap_or(podvigin::DEFAULT_MULTIPLIER)).map_err(cfg_err)?;
        let eps = match &self.eps_divisor {
            Some(s) => {
                let divisor = q_field("eps_divisor", s)?;
                if divisor <= Q::from_integer(0.into()) {
                    return Err(cfg_err("eps_divisor must be positive"));
                }
                EpsSchedule { divisor }
            }
            None => EpsSchedule::default(),
        };
        let retry_cap = self.retry_cap.unwrap_or(podvigin::DEFAULT_RETRY_CAP);
        if retry_cap == 0 {
            return Err(cfg_err("retry_cap must be positive"));
        }
        Ok((
            spec,
            StageParams {
                rate: rate_of(&self.rate)?,
                eps,
                retry_cap,
            },
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlpernConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub heights: Vec<u64>,
    pub masses: Vec<String>,
    /// Total length; the least feasible one when absent.
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub tol: Option<String>,
    #[serde(default)]
    pub n_cap: Option<u64>,
    #[serde(default)]
    pub wiring: Wiring,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `krengel` or `podvigin`.
    pub target: String,
    /// Path of the witness IR JSON.
    pub witness: PathBuf,
    /// Stage table of a podvigin run; supplies the window lengths `N_j`.
    #[serde(default)]
    pub rows: Option<PathBuf>,
    /// The config object the witness was built from.
    pub experiment: serde_json::Value,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// A CSV with `j` and `ratio` columns.
    pub rows: PathBuf,
}

fn parse_config<T: DeserializeOwned>(cmd: Command, value: &serde_json::Value) -> Result<T, CliError> {
    if let Some(c) = value.get("command") {
        let c = c.as_str().ok_or_else(|| cfg_err("command must be a string"))?;
        match Command::parse(c) {
            Some(parsed) if parsed == cmd => {}
            Some(_) => return Err(cfg_err(format!("config is for {c:?}, not {:?}", cmd.name()))),
            None => return Err(cfg_err(format!("unknown command {c:?}"))),
        }
    }
    serde_json::from_value(value.clone()).map_err(cfg_err)
}

/// Artifacts of one pipeline before they hit the disk.
pub struct Outcome {
    pub files: Vec<(String, String, String)>,
    pub verdict: Verdict,
}

impl Outcome {
    fn new(verdict: Verdict) -> Self {
        Self {
            files: Vec::new(),
            verdict,
        }
    }

    fn add(&mut self, role: &str, name: &str, body: String) {
        self.files.push((role.into(), name.into(), body));
    }

    fn add_plot(&mut self, csv: &str) {
        match report::emit_plot(csv.as_bytes()) {
            Ok(Some(svg)) => self.add("plot", "ratios.svg", svg),
            Ok(None) => eprintln!("warning: no ratio rows; ratios.svg not written"),
            Err(e) => eprintln!("warning: plot skipped: {e}"),
        }
    }
}

pub struct RunResult {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.verdict.pass {
            0
        } else {
            1
        }
    }
}

pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| cfg_err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A second initialisation in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs `cmd` on the config at `config_path`; `out` overrides the config's
/// output directory (default `out`). Relative paths inside the config are
/// resolved against the config's directory.
pub fn run(cmd: Command, config_path: &Path, out: Option<&Path>) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let text = read(config_path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(cfg_err)?;
    if !value.is_object() {
        return Err(cfg_err("config must be a JSON object"));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let (outcome, cfg_out) = match cmd {
        Command::Krengel => {
            let c: KrengelConfig = parse_config(cmd, &value)?;
            (run_krengel(&c)?, c.out)
        }
        Command::Podvigin => {
            let c: PodviginConfig = parse_config(cmd, &value)?;
            (run_podvigin(&c)?, c.out)
        }
        Command::Alpern => {
            let c: AlpernConfig = parse_config(cmd, &value)?;
            (run_alpern(&c)?, c.out)
        }
        Command::Verify => {
            let c: VerifyConfig = parse_config(cmd, &value)?;
            let witness = read(&resolve(&c.witness))?;
            let rows = c.rows.as_deref().map(|p| read(&resolve(p))).transpose()?;
            (run_verify(&c, &witness, rows.as_deref())?, c.out)
        }
        Command::Report => {
            let c: ReportConfig = parse_config(cmd, &value)?;
            let rows = read(&resolve(&c.rows))?;
            (run_report(&rows)?, c.out)
        }
    };
    let out_dir = match (out, cfg_out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(&o),
        (None, None) => PathBuf::from("out"),
    };
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut artifacts = BTreeMap::new();
    for (role, name, body) in &outcome.files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        artifacts.insert(role.clone(), name.clone());
    }
    artifacts.insert("manifest".into(), "manifest.json".into());
    let manifest = RunManifest {
        command: cmd.name().into(),
        config: value,
        artifacts,
        wall_clock_ms: start.elapsed().as_millis(),
        verdict: outcome.verdict,
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(RunResult { manifest, out_dir })
}

fn krengel_outcome(w: &KrengelWitness) -> Result<Outcome, CliError> {
    let (rows, checks) = match krengel::verify_krengel(w) {
        Ok(v) => v,
        Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
    };
    let mut o = Outcome::new(Verdict::from_checks(&checks));
    o.add("witness", "witness.json", w.system.to_json());
    let csv = report::krengel_table(&rows).to_csv();
    o.add_plot(&csv);
    o.add("rows", "rows.csv", csv);
    o.add("checks", "checks.csv", report::checks_table(&checks).to_csv());
    Ok(o)
}

pub fn run_krengel(c: &KrengelConfig) -> Result<Outcome, CliError> {
    let tol = c.tol()?;
    let plan = match c.plan()? {
        Ok(p) => p,
        Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
    };
    let w = match krengel::build_witness(&plan, &tol, c.wiring, c.n_cap.unwrap_or(alpern::DEFAULT_N_CAP)) {
        Ok(w) => w,
        Err(KrengelError::Alpern(e @ (AlpernError::Invalid(_) | AlpernError::Coprimality { .. }))) => {
            return Err(cfg_err(e))
        }
        Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
    };
    let mut o = krengel_outcome(&w)?;
    let doc = SolutionDoc::from(&w.solution);
    o.add("solution", "solution.json", serde_json::to_string_pretty(&doc).expect("serializable") + "\n");
    Ok(o)
}

fn podvigin_failure(e: PodviginError) -> Result<Outcome, CliError> {
    match e {
        PodviginError::Invalid(_) | PodviginError::TooCoarse { .. } | PodviginError::Rate(_) => Err(cfg_err(e)),
        other => Ok(Outcome::new(Verdict::failure(other.to_string()))),
    }
}

pub fn run_podvigin(c: &PodviginConfig) -> Result<Outcome, CliError> {
    let (spec, params) = c.parts()?;
    let state = match podvigin::run_all(&spec, &params) {
        Ok(s) => s,
        Err(e) => return podvigin_failure(e),
    };
    let div = match podvigin::verify_divergence(&state, &params.rate, &params.eps) {
        Ok(d) => d,
        Err(e) => return podvigin_failure(e),
    };
    let mut checks: Vec<Check> = Vec::new();
    let mut bands = Vec::new();
    for rec in &state.history {
        checks.extend(rec.gap_check());
        checks.extend(rec.bands.iter().map(|e| e.to_check()));
        bands.extend(rec.bands.iter().cloned());
    }
    checks.extend(div.iter().flat_map(|d| d.checks()));
    let mut o = Outcome::new(Verdict::from_checks(&checks));
    o.add("witness", "witness.json", state.merged.to_json());
    let csv = report::podvigin_table(&state.history, &div).to_csv();
    o.add_plot(&csv);
    o.add("rows", "rows.csv", csv);
    o.add("bands", "bands.csv", report::band_table(&bands).to_csv());
    o.add("checks", "checks.csv", report::checks_table(&checks).to_csv());
    Ok(o)
}

pub fn run_alpern(c: &AlpernConfig) -> Result<Outcome, CliError> {
    let masses = q_list("masses", &c.masses)?;
    let tol = match &c.tol {
        Some(s) => q_field("tol", s)?,
        None => Q::new(DEFAULT_TOL.0.into(), DEFAULT_TOL.1.into()),
    };
    let solved = match c.n {
        Some(n) => alpern::solve_multiplicities(&c.heights, &masses, n, &tol),
        None => alpern::min_feasible_n(&c.heights, &masses, &tol, 1, c.n_cap.unwrap_or(alpern::DEFAULT_N_CAP))
            .and_then(|n| alpern::solve_multiplicities(&c.heights, &masses, n, &tol)),
    };
    let sol = match solved {
        Ok(s) => s,
        Err(e @ (AlpernError::Invalid(_) | AlpernError::Coprimality { .. })) => return Err(cfg_err(e)),
        Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
    };
    let checks = alpern_checks(&sol, &tol);
    let mut o = Outcome::new(Verdict::from_checks(&checks));
    o.add("witness", "witness.json", alpern::build_tower_cycle(&sol, c.wiring).to_json());
    let doc = SolutionDoc::from(&sol);
    o.add("solution", "solution.json", serde_json::to_string_pretty(&doc).expect("serializable") + "\n");
    let mut t = Table::new(&["j", "height", "multiplicity", "target", "mass", "error"]);
    for j in 0..sol.heights.len() {
        t.push(vec![
            (j + 1).to_string(),
            sol.heights[j].to_string(),
            sol.multiplicities[j].to_string(),
            crate::rational::fmt_q(&sol.targets[j]),
            crate::rational::fmt_q(&sol.masses[j]),
            crate::rational::fmt_q(&(&sol.masses[j] - &sol.targets[j])),
        ]);
    }
    o.add("rows", "rows.csv", t.to_csv());
    o.add("checks", "checks.csv", report::checks_table(&checks).to_csv());
    Ok(o)
}

fn alpern_checks(sol: &AlpernSolution, tol: &Q) -> Vec<Check> {
    use crate::check::Relation;
    let total: u64 = sol.heights.iter().zip(&sol.multiplicities).map(|(h, k)| h * k).sum();
    vec![
        Check::new(0, "sum k_j h_j = n", q_u64(total), Relation::Ge, q_u64(sol.n)),
        Check::new(0, "sum k_j h_j = n", q_u64(total), Relation::Le, q_u64(sol.n)),
        Check::new(0, "max mass error <= tol", sol.max_mass_error.clone(), Relation::Le, tol.clone()),
    ]
}

/// Heights and multiplicities of a tower-cycle IR, by label.
fn tower_solution(ir: &SystemIR, targets: &[Q]) -> Result<AlpernSolution, CliError> {
    let NodeView::Loop { children } = ir.view() else {
        return Err(cfg_err("witness: expected a loop of towers"));
    };
    let m = targets.len();
    let mut heights = vec![0u64; m];
    let mut mult = vec![0u64; m];
    for (i, ch) in children.iter().enumerate() {
        let NodeView::Tower { height, label } = ch.view() else {
            return Err(cfg_err(format!("witness: child {i} is not a tower")));
        };
        let l = label as usize;
        if l >= m {
            return Err(cfg_err(format!("witness: tower label {l} outside {m} families")));
        }
        if heights[l] != 0 && heights[l] != height {
            return Err(cfg_err(format!("witness: family {} has mixed heights", l + 1)));
        }
        heights[l] = height;
        mult[l] += 1;
    }
    let n = ir.len();
    let masses: Vec<Q> = heights
        .iter()
        .zip(&mult)
        .map(|(&h, &k)| q_u64(h * k) / q_u64(n))
        .collect();
    let max_mass_error = masses
        .iter()
        .zip(targets)
        .map(|(a, b)| num_traits::Signed::abs(&(a - b)))
        .max()
        .unwrap_or_default();
    Ok(AlpernSolution {
        heights,
        multiplicities: mult,
        n,
        targets: targets.to_vec(),
        masses,
        max_mass_error,
    })
}

/// `j → N_j` from a podvigin stage table.
fn stage_scales_from_csv(rows: &str) -> Result<Vec<(usize, u64)>, CliError> {
    let mut rd = csv::Reader::from_reader(rows.as_bytes());
    let headers = rd.headers().map_err(cfg_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| cfg_err(format!("rows: missing column {name:?}")))
    };
    let (jc, nc) = (col("j")?, col("n")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(cfg_err)?;
        let n = rec.get(nc).unwrap_or("");
        if n.is_empty() {
            continue;
        }
        let j = rec.get(jc).unwrap_or("").parse().map_err(|_| cfg_err("rows: bad j"))?;
        let n = n.parse().map_err(|_| cfg_err("rows: bad n"))?;
        out.push((j, n));
    }
    Ok(out)
}

pub fn run_verify(c: &VerifyConfig, witness: &str, rows: Option<&str>) -> Result<Outcome, CliError> {
    let ir = SystemIR::from_json(witness).map_err(|e| cfg_err(format!("witness: {e}")))?;
    let checks = match c.target.as_str() {
        "krengel" => {
            let k: KrengelConfig = parse_config(Command::Krengel, &c.experiment)?;
            let plan = match k.plan()? {
                Ok(p) => p,
                Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
            };
            let solution = tower_solution(&ir, &plan.masses)?;
            let mut checks = Vec::new();
            for (j, (&want, &got)) in plan.heights.iter().zip(&solution.heights).enumerate() {
                checks.push(Check::new(
                    j as u64 + 1,
                    "witness tower height matches plan",
                    q_u64(got),
                    crate::check::Relation::Ge,
                    q_u64(want),
                ));
                checks.push(Check::new(
                    j as u64 + 1,
                    "witness tower height matches plan",
                    q_u64(got),
                    crate::check::Relation::Le,
                    q_u64(want),
                ));
            }
            if crate::check::first_failure(&checks).is_none() {
                let w = KrengelWitness {
                    a: solution.masses[0].clone(),
                    plan,
                    solution,
                    wiring: k.wiring,
                    system: ir.clone(),
                };
                match krengel::verify_krengel(&w) {
                    Ok((_, more)) => checks.extend(more),
                    Err(e) => return Ok(Outcome::new(Verdict::failure(e.to_string()))),
                }
            }
            checks
        }
        "podvigin" => {
            let p: PodviginConfig = parse_config(Command::Podvigin, &c.experiment)?;
            let (spec, params) = p.parts()?;
            let rows = rows.ok_or_else(|| cfg_err("verify podvigin needs \"rows\""))?;
            let scales = stage_scales_from_csv(rows)?;
            if ir.len() % spec.granularity != 0 || ir.label_space() > spec.masses.len() {
                return Err(cfg_err("witness does not match the component masses"));
            }
            let mut checks = Vec::new();
            for &(j, n) in &scales {
                let bound = (spec.c_j(j) - spec.c()) / q_u64(j as u64);
                match params.rate.eval(n) {
                    Ok(psi) => checks.push(Check::new(
                        j as u64,
                        "psi_up(N_j) < (c_j - c)/j",
                        psi,
                        crate::check::Relation::Lt,
                        bound,
                    )),
                    Err(e) => return Err(cfg_err(e)),
                }
            }
            checks.extend(
                podvigin::final_bands(&spec, &params.eps, &ir, &scales)
                    .iter()
                    .map(|e| e.to_check()),
            );
            checks.extend(podvigin::audit_structure(&spec, &ir));
            let div = podvigin::divergence_rows(&spec, &params.eps, &params.rate, &ir, &scales).map_err(cfg_err)?;
            checks.extend(div.iter().flat_map(|d| d.checks()));
            checks
        }
        other => return Err(cfg_err(format!("verify target must be krengel or podvigin, got {other:?}"))),
    };
    let mut o = Outcome::new(Verdict::from_checks(&checks));
    o.add("checks", "checks.csv", report::checks_table(&checks).to_csv());
    Ok(o)
}

pub fn run_report(rows: &str) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(Verdict::from_checks(&[]));
    match report::emit_plot(rows.as_bytes()) {
        Ok(Some(svg)) => o.add("plot", "ratios.svg", svg),
        Ok(None) => eprintln!("warning: no ratio rows; ratios.svg not written"),
        Err(e) => return Err(cfg_err(format!("rows: {e}"))),
    }
    Ok(o)
}
