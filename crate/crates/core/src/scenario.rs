//! Declarative scenario runs: a TOML config in, a deterministic dataset out.
//!
//! Every scenario is a pure function of its config. Grid points are computed
//! in parallel and collected in grid order, so output files are bit-identical
//! across runs and thread counts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::dynamics::{
    decoherence_time_general, evolve_lindblad_with, gamma_for_decoherence_time, LindbladModel, StepPlan,
    ThermoTimeSeries,
};
use crate::error::{Error, Result};
use crate::network::{
    backward_ensemble, build_exchange_model, detailed_ft_residuals, forward_ensemble, integral_ft,
    jensen_bound_report, CompositeModel,
};
use crate::qubit::{self, DrivenQubitParams};
use crate::response::{fdr_work_prediction, MIN_QUADRATURE_NODES};
use crate::state::{free_energy, measures};

/// τ_D/τ_W targets of the decoherence comparison, in column order.
pub const FIG3_RATIOS: [f64; 3] = [5.0, 1.0, 0.5];

/// `τ_P ≲ τ_A` is read as `τ_P ≤ UNITARY_FACTOR · τ_A`.
pub const UNITARY_FACTOR: f64 = 10.0;
/// `τ_W ≪ τ_D` is read as `τ_D ≥ NONUNITARY_FACTOR · τ_W`.
pub const NONUNITARY_FACTOR: f64 = 5.0;

/// Relative tolerance of the exact first-law identity checked on every row.
const CLOSURE_TOL: f64 = 1e-8;
/// Relative tolerance between `E − E₀ − Q` and the integrated power.
const POWER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Fig1,
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3,
    FtCheck,
    Sweep,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Fig1,
        Scenario::Fig2a,
        Scenario::Fig2b,
        Scenario::Fig2c,
        Scenario::Fig3,
        Scenario::FtCheck,
        Scenario::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::Fig2a => "fig2a",
            Scenario::Fig2b => "fig2b",
            Scenario::Fig2c => "fig2c",
            Scenario::Fig3 => "fig3",
            Scenario::FtCheck => "ft-check",
            Scenario::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("output.format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

// Raw file layout. Everything optional; defaults depend on the scenario.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<String>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    output: RawOutput,
    sweep: Option<RawSweep>,
    #[serde(default)]
    network: RawNetwork,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    omega0: Option<f64>,
    omega: Option<f64>,
    g: Option<f64>,
    beta: Option<f64>,
    a: Option<f64>,
    gamma: Option<f64>,
    tau_d_ratio: Option<f64>,
    nbar: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_end: Option<f64>,
    samples: Option<usize>,
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    omega_count: Option<usize>,
    g_min: Option<f64>,
    g_max: Option<f64>,
    g_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    dt: Option<f64>,
    quadrature_nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Option<String>,
    values: Option<Vec<f64>>,
    min: Option<f64>,
    max: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    model: Option<String>,
    t: Option<f64>,
    coupling: Option<f64>,
}

/// Bath coupling, either directly or through a target `τ_D/τ_W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    Closed,
    Gamma(f64),
    TauRatio(f64),
}

/// Rectangular (ω, g) grid in units of ω₀.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_count: usize,
    pub g_min: f64,
    pub g_max: f64,
    pub g_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Omega,
    Omega0,
    G,
    Beta,
    A,
}

impl SweepParameter {
    fn apply(self, p: DrivenQubitParams, v: f64) -> DrivenQubitParams {
        match self {
            SweepParameter::Omega => DrivenQubitParams { omega: v, ..p },
            SweepParameter::Omega0 => DrivenQubitParams { omega0: v, ..p },
            SweepParameter::G => DrivenQubitParams { g: v, ..p },
            SweepParameter::Beta => DrivenQubitParams { beta: v, ..p },
            SweepParameter::A => DrivenQubitParams { a: v, ..p },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Closed,
    Exchange,
}

/// A validated scenario recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub params: DrivenQubitParams,
    pub damping: Damping,
    pub nbar: Option<f64>,
    pub t_end: f64,
    pub samples: usize,
    pub dt: f64,
    pub quadrature_nodes: usize,
    pub plane: PlaneGrid,
    pub sweep: Option<(SweepParameter, Vec<f64>)>,
    pub network: NetworkKind,
    pub network_t: f64,
    pub coupling: f64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

fn check(cond: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

fn finite(v: f64, field: &str) -> Result<f64> {
    check(v.is_finite(), field, format!("must be finite, got {v}"))?;
    Ok(v)
}

fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    (0..count).map(|k| min + (max - min) * k as f64 / (count - 1) as f64).collect()
}

impl ScenarioConfig {
    /// Reads and validates a config file. `scenario` (from the command line)
    /// wins over the file's `scenario` key when both are present.
    pub fn load(path: &Path, scenario: Option<Scenario>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, scenario)
    }

    pub fn from_toml_str(text: &str, scenario: Option<Scenario>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        let scenario = match (scenario, raw.scenario.as_deref()) {
            (Some(s), _) => s,
            (None, Some(name)) => name.parse()?,
            (None, None) => return Err(Error::config("scenario", "no scenario given")),
        };
        Self::from_raw(raw, scenario)
    }

    /// Defaults for a scenario with no config file.
    pub fn defaults(scenario: Scenario) -> Result<Self> {
        Self::from_raw(RawConfig::default(), scenario)
    }

    fn from_raw(raw: RawConfig, scenario: Scenario) -> Result<Self> {
        let base = DrivenQubitParams::figure2(if scenario == Scenario::Fig2a { 0.0 } else { 0.3 });
        let m = &raw.model;
        let params = DrivenQubitParams {
            omega0: finite(m.omega0.unwrap_or(base.omega0), "model.omega0")?,
            omega: finite(m.omega.unwrap_or(base.omega), "model.omega")?,
            g: finite(m.g.unwrap_or(base.g), "model.g")?,
            beta: finite(m.beta.unwrap_or(base.beta), "model.beta")?,
            a: finite(m.a.unwrap_or(base.a), "model.a")?,
        };
        check(params.omega > 0.0, "model.omega", "must be positive")?;
        check(params.omega0 > 0.0, "model.omega0", "must be positive")?;
        check(params.g >= 0.0, "model.g", "must be non-negative")?;
        check(params.beta > 0.0, "model.beta", "must be positive")?;
        check((0.0..=1.0).contains(&params.a), "model.a", "must lie in [0, 1]")?;

        let damping = match (m.gamma, m.tau_d_ratio) {
            (Some(_), Some(_)) => {
                return Err(Error::config("model.gamma", "give either gamma or tau_d_ratio, not both"))
            }
            (Some(g), None) => {
                check(finite(g, "model.gamma")? >= 0.0, "model.gamma", "must be non-negative")?;
                if g == 0.0 {
                    Damping::Closed
                } else {
                    Damping::Gamma(g)
                }
            }
            (None, Some(r)) => {
                check(finite(r, "model.tau_d_ratio")? > 0.0, "model.tau_d_ratio", "must be positive")?;
                Damping::TauRatio(r)
            }
            (None, None) if scenario == Scenario::Fig2c => Damping::TauRatio(1.0),
            (None, None) => Damping::Closed,
        };
        if let Some(n) = m.nbar {
            check(finite(n, "model.nbar")? >= 0.0, "model.nbar", "must be non-negative")?;
        }
        if params.g == 0.0 && matches!(scenario, Scenario::Fig2a | Scenario::Fig2b | Scenario::Fig2c | Scenario::Fig3) {
            return Err(Error::config("model.g", "time-series scenarios need a nonzero drive"));
        }

        let g = &raw.grid;
        let default_t_end = match scenario {
            Scenario::Fig3 => 6.0 * params.extraction_time(),
            _ => params.rabi_period(),
        };
        let t_end = finite(g.t_end.unwrap_or(default_t_end), "grid.t_end")?;
        check(t_end > 0.0, "grid.t_end", "must be positive")?;
        let samples = g.samples.unwrap_or(if scenario == Scenario::Fig3 { 600 } else { 400 });
        check(samples >= 1, "grid.samples", "must be at least 1")?;
        let plane = PlaneGrid {
            omega_min: finite(g.omega_min.unwrap_or(0.05), "grid.omega_min")?,
            omega_max: finite(g.omega_max.unwrap_or(2.0), "grid.omega_max")?,
            omega_count: g.omega_count.unwrap_or(40),
            g_min: finite(g.g_min.unwrap_or(0.0), "grid.g_min")?,
            g_max: finite(g.g_max.unwrap_or(0.5), "grid.g_max")?,
            g_count: g.g_count.unwrap_or(26),
        };
        check(plane.omega_min > 0.0, "grid.omega_min", "must be positive")?;
        check(plane.omega_max > plane.omega_min, "grid.omega_max", "must exceed omega_min")?;
        check(plane.g_min >= 0.0, "grid.g_min", "must be non-negative")?;
        check(plane.g_max > plane.g_min, "grid.g_max", "must exceed g_min")?;
        check(plane.omega_count >= 2, "grid.omega_count", "must be at least 2")?;
        check(plane.g_count >= 2, "grid.g_count", "must be at least 2")?;

        let i = &raw.integrator;
        let dt = finite(i.dt.unwrap_or(0.5 * params.rabi_period() * 1e-4), "integrator.dt")?;
        check(dt > 0.0, "integrator.dt", "must be positive")?;
        check(dt <= t_end, "integrator.dt", "must not exceed grid.t_end")?;
        let quadrature_nodes = i.quadrature_nodes.unwrap_or(32);
        check(
            quadrature_nodes >= MIN_QUADRATURE_NODES,
            "integrator.quadrature_nodes",
            format!("must be at least {MIN_QUADRATURE_NODES}"),
        )?;

        let sweep = match (&raw.sweep, scenario) {
            (None, Scenario::Sweep) => return Err(Error::config("sweep", "the sweep scenario needs a [sweep] table")),
            (None, _) => None,
            (Some(s), _) => {
                let parameter = match s.parameter.as_deref() {
                    Some("omega") => SweepParameter::Omega,
                    Some("omega0") => SweepParameter::Omega0,
                    Some("g") => SweepParameter::G,
                    Some("beta") => SweepParameter::Beta,
                    Some("a") => SweepParameter::A,
                    Some(other) => {
                        return Err(Error::config(
                            "sweep.parameter",
                            format!("expected one of omega, omega0, g, beta, a; got `{other}`"),
                        ))
                    }
                    None => return Err(Error::config("sweep.parameter", "missing")),
                };
                let values = match (&s.values, s.min, s.max, s.count) {
                    (Some(v), None, None, None) => v.clone(),
                    (None, Some(lo), Some(hi), Some(n)) => {
                        check(n >= 1, "sweep.count", "must be at least 1")?;
                        check(hi >= lo, "sweep.max", "must not be below sweep.min")?;
                        linspace(lo, hi, n)
                    }
                    _ => {
                        return Err(Error::config("sweep.values", "give either `values` or all of `min`, `max`, `count`"))
                    }
                };
                check(!values.is_empty(), "sweep.values", "must not be empty")?;
                for &v in &values {
                    finite(v, "sweep.values")?;
                    parameter.apply(params, v).validate().map_err(|e| Error::config("sweep.values", e.to_string()))?;
                }
                Some((parameter, values))
            }
        };

        let n = &raw.network;
        let network = match n.model.as_deref() {
            None | Some("closed") => NetworkKind::Closed,
            Some("exchange") => NetworkKind::Exchange,
            Some(other) => {
                return Err(Error::config("network.model", format!("expected closed or exchange, got `{other}`")))
            }
        };
        let network_t = finite(n.t.unwrap_or(params.extraction_time()), "network.t")?;
        check(network_t >= 0.0, "network.t", "must be non-negative")?;
        let coupling = finite(n.coupling.unwrap_or(0.05), "network.coupling")?;
        check(coupling >= 0.0, "network.coupling", "must be non-negative")?;
        if network == NetworkKind::Exchange && !network_t.is_finite() {
            return Err(Error::config("network.t", "must be finite"));
        }

        let format = match raw.output.format.as_deref() {
            Some(f) => f.parse()?,
            None => OutputFormat::Csv,
        };
        let cfg = Self {
            scenario,
            params,
            damping,
            nbar: m.nbar,
            t_end,
            samples,
            dt,
            quadrature_nodes,
            plane,
            sweep,
            network,
            network_t,
            coupling,
            out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from(".")),
            format,
        };
        if (matches!(scenario, Scenario::Fig2c | Scenario::Fig3) || cfg.damping != Damping::Closed)
            && cfg.nbar.is_none()
        {
            crate::dynamics::thermal_occupation(params.omega0, params.beta)
                .map_err(|e| Error::config("model.nbar", e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Overrides the integrator step (command-line `--dt`).
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        check(dt.is_finite() && dt > 0.0, "--dt", format!("must be positive, got {dt}"))?;
        check(dt <= self.t_end, "--dt", "must not exceed grid.t_end")?;
        self.dt = dt;
        Ok(self)
    }

    pub fn with_out_dir(mut self, dir: PathBuf) -> Self {
        self.out_dir = dir;
        self
    }

    pub fn with_format(mut self, format: OutputFormat) -> Self {
        self.format = format;
        self
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(0.0, self.t_end, self.samples + 1)
    }

    fn gamma_for(&self, damping: Damping) -> Result<f64> {
        let p = &self.params;
        match damping {
            Damping::Closed => Ok(0.0),
            Damping::Gamma(g) => Ok(g),
            Damping::TauRatio(r) => {
                gamma_for_decoherence_time(p, self.nbar, &qubit::initial_state(p)?, r * p.extraction_time())
            }
        }
    }

    fn record_every(&self) -> usize {
        let steps = (self.t_end / self.dt * (1.0 - 1e-12)).ceil() as usize;
        (steps / self.samples).max(1)
    }
}

/// Output of a scenario run.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Table { columns: Vec<String>, rows: Vec<Vec<f64>> },
    Report(Value),
}

impl Dataset {
    fn table(columns: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Dataset::Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        match self {
            Dataset::Table { columns, rows } => {
                let k = columns.iter().position(|c| c == name)?;
                Some(rows.iter().map(|r| r[k]).collect())
            }
            Dataset::Report(_) => None,
        }
    }

    /// Serialised file contents. CSV floats carry 17 significant digits.
    pub fn render(&self, format: OutputFormat) -> String {
        match (self, format) {
            (Dataset::Table { columns, rows }, OutputFormat::Csv) => {
                let mut out = columns.join(",");
                out.push('\n');
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            (Dataset::Table { columns, rows }, OutputFormat::Json) => {
                let v = json!({ "columns": columns, "rows": rows });
                serde_json::to_string_pretty(&v).expect("serialisable") + "\n"
            }
            (Dataset::Report(v), OutputFormat::Json) => serde_json::to_string_pretty(v).expect("serialisable") + "\n",
            (Dataset::Report(v), OutputFormat::Csv) => {
                let mut out = String::from("key,value\n");
                flatten(v, "", &mut out);
                out
            }
        }
    }

    /// Writes `<dir>/<scenario>.<ext>` and returns its path.
    pub fn write(&self, dir: &Path, scenario: Scenario, format: OutputFormat) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.{}", scenario.name(), format.extension()));
        fs::write(&path, self.render(format))?;
        Ok(path)
    }
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(x, &key, out);
            }
        }
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => out.push_str(&format!("{prefix},{f:.16e}\n")),
            _ => out.push_str(&format!("{prefix},{n}\n")),
        },
        other => out.push_str(&format!("{prefix},{other}\n")),
    }
}

fn with_context(scenario: Scenario, r: Result<Dataset>) -> Result<Dataset> {
    r.map_err(|e| Error::Scenario {
        scenario: scenario.name().into(),
        source: Box::new(e),
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Dataset> {
    let r = match cfg.scenario {
        Scenario::Fig1 => run_fig1(cfg),
        Scenario::Fig2a | Scenario::Fig2b => run_fig2_closed(cfg),
        Scenario::Fig2c => run_fig2c(cfg),
        Scenario::Fig3 => run_fig3(cfg),
        Scenario::FtCheck => run_ft_check(cfg),
        Scenario::Sweep => run_sweep(cfg),
    };
    with_context(cfg.scenario, r)
}

fn first_law_failure(t: f64, what: &str, defect: f64) -> Error {
    Error::IntegratorFailure {
        t,
        reason: format!("first-law check failed ({what}: relative defect {defect:e})"),
    }
}

/// `ΔC` at half a Rabi period over the (ω, g) plane, g-major order.
fn run_fig1(cfg: &ScenarioConfig) -> Result<Dataset> {
    let base = cfg.params;
    let pl = &cfg.plane;
    let gs = linspace(pl.g_min, pl.g_max, pl.g_count);
    let ws = linspace(pl.omega_min, pl.omega_max, pl.omega_count);
    let points: Vec<(f64, f64)> = gs.iter().flat_map(|&g| ws.iter().map(move |&w| (w, g))).collect();
    let rows = points
        .par_iter()
        .map(|&(w, g)| {
            let p = DrivenQubitParams {
                omega: w * base.omega0,
                g: g * base.omega0,
                ..base
            };
            if p.g == 0.0 {
                // constant Hamiltonian: nothing changes
                return Ok(vec![p.omega, p.g, 0.0]);
            }
            let t = p.extraction_time();
            let rho0 = qubit::initial_state(&p)?;
            let rho_t = qubit::evolved_state(&p, t)?;
            let e0 = qubit::hamiltonian_at(&p, 0.0).expectation(rho0.matrix());
            let et = qubit::hamiltonian_at(&p, t).expectation(rho_t.matrix());
            let defect = (et - e0 - qubit::analytic_work(&p, t)).abs() / e0.abs().max(et.abs());
            if defect > CLOSURE_TOL {
                return Err(first_law_failure(t, "closed energy balance", defect));
            }
            Ok(vec![p.omega, p.g, qubit::coherence_change(&p, t)?])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::table(&["omega", "g", "delta_C"], rows))
}

const FIG2_COLUMNS: [&str; 6] = ["t", "betaW", "deltaC", "deltaC_plus_D", "W_LR", "sigma2W"];

/// Closed protocol at the config's times, from the exact propagator.
fn run_fig2_closed(cfg: &ScenarioConfig) -> Result<Dataset> {
    let p = cfg.params;
    let h0 = qubit::hamiltonian_at(&p, 0.0);
    let rho0 = qubit::initial_state(&p)?;
    let m0 = measures(&rho0, &h0, p.beta)?;
    let reference = p.with_a(0.0);
    let ref_model = CompositeModel::closed_qubit(&reference)?;
    let rho_th = qubit::initial_state(&reference)?;
    let rows = cfg
        .times()
        .par_iter()
        .map(|&t| {
            let ht = qubit::hamiltonian_at(&p, t);
            let mt = measures(&qubit::evolved_state(&p, t)?, &ht, p.beta)?;
            let w = mt.energy - m0.energy;
            let defect = (w - qubit::analytic_work(&p, t)).abs() / m0.energy.abs().max(mt.energy.abs());
            if defect > CLOSURE_TOL {
                return Err(first_law_failure(t, "closed energy balance", defect));
            }
            let fdr = fdr_work_prediction(&p, t, &forward_ensemble(&ref_model, &rho_th, t)?, cfg.quadrature_nodes)?;
            Ok(vec![
                t,
                p.beta * w,
                mt.coherence - m0.coherence,
                (mt.coherence + mt.athermality) - (m0.coherence + m0.athermality),
                fdr.predicted_work,
                fdr.work_variance,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::table(&FIG2_COLUMNS, rows))
}

fn check_series(series: &ThermoTimeSeries) -> Result<()> {
    let t = series.last().map(|s| s.t).unwrap_or(0.0);
    let closure = series.closure_residual();
    if closure > CLOSURE_TOL {
        return Err(first_law_failure(t, "W + Q = E - E0", closure));
    }
    let power = series.first_law_defect();
    if power > POWER_TOL {
        return Err(first_law_failure(t, "integrated power", power));
    }
    Ok(())
}

fn open_series(cfg: &ScenarioConfig, damping: Damping) -> Result<ThermoTimeSeries> {
    let p = cfg.params;
    let gamma = cfg.gamma_for(damping)?;
    let model = LindbladModel::driven_qubit(&p, gamma, cfg.nbar)?;
    let plan = StepPlan {
        dt: cfg.dt,
        record_every: cfg.record_every(),
    };
    let series = evolve_lindblad_with(&model, &qubit::initial_state(&p)?, cfg.t_end, plan)?;
    check_series(&series)?;
    Ok(series)
}

/// Lindblad dynamics. `W_LR`/`sigma2W` are the closed-protocol linear
/// response values at the same times.
fn run_fig2c(cfg: &ScenarioConfig) -> Result<Dataset> {
    let p = cfg.params;
    let series = open_series(cfg, cfg.damping)?;
    let first = series.samples()[0];
    let reference = p.with_a(0.0);
    let ref_model = CompositeModel::closed_qubit(&reference)?;
    let rho_th = qubit::initial_state(&reference)?;
    let rows = series
        .samples()
        .par_iter()
        .map(|s| {
            let fdr = fdr_work_prediction(&p, s.t, &forward_ensemble(&ref_model, &rho_th, s.t)?, cfg.quadrature_nodes)?;
            Ok(vec![
                s.t,
                p.beta * s.work,
                s.coherence - first.coherence,
                (s.coherence + s.athermality) - (first.coherence + first.athermality),
                fdr.predicted_work,
                fdr.work_variance,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::table(&FIG2_COLUMNS, rows))
}

/// Three Lindblad runs with τ_D/τ_W = 5, 1, 0.5 on a shared grid.
/// `tauD_markers` holds a curve's ratio on the row nearest its τ_D, else 0.
fn run_fig3(cfg: &ScenarioConfig) -> Result<Dataset> {
    let p = cfg.params;
    let runs = FIG3_RATIOS
        .par_iter()
        .map(|&r| open_series(cfg, Damping::TauRatio(r)))
        .collect::<Result<Vec<_>>>()?;
    let times = runs[0].times();
    let mut markers = vec![0.0; times.len()];
    for &r in &FIG3_RATIOS {
        let tau_d = r * p.extraction_time();
        if tau_d <= cfg.t_end {
            let k = times
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - tau_d).abs().total_cmp(&(b.1 - tau_d).abs()))
                .map(|(k, _)| k)
                .expect("non-empty grid");
            markers[k] = r;
        }
    }
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            row.extend(runs.iter().map(|s| p.beta * s.samples()[k].work));
            row.push(markers[k]);
            row
        })
        .collect();
    Ok(Dataset::table(
        &["t", "betaW_ratio5", "betaW_ratio1", "betaW_ratio05", "tauD_markers"],
        rows,
    ))
}

fn run_ft_check(cfg: &ScenarioConfig) -> Result<Dataset> {
    let p = cfg.params;
    let (model, rho0, label) = match cfg.network {
        NetworkKind::Closed => (CompositeModel::closed_qubit(&p)?, qubit::initial_state(&p)?, "closed"),
        NetworkKind::Exchange => {
            let undriven = p.with_g(0.0);
            (
                build_exchange_model(cfg.coupling, p.omega0, p.beta)?,
                qubit::initial_state(&undriven)?,
                "exchange",
            )
        }
    };
    let t = cfg.network_t;
    let fw = forward_ensemble(&model, &rho0, t)?;
    let rho_t = model.evolved_local_state(&rho0, t)?;
    let bw = backward_ensemble(&model, &rho0, &rho_t, t)?;
    let residuals = detailed_ft_residuals(&fw, &bw)?;
    let jensen = jensen_bound_report(&fw);
    Ok(Dataset::Report(json!({
        "model": label,
        "t": t,
        "paths": fw.len(),
        "degenerate": fw.is_degenerate(),
        "sum_forward": fw.sum_forward(),
        "sum_backward": bw.sum_backward(),
        "integral_ft": integral_ft(&fw),
        "max_detailed_residual": residuals.iter().copied().fold(0.0, f64::max),
        "jensen": {
            "lhs": jensen.lhs,
            "rhs": jensen.rhs,
            "slack": jensen.slack,
            "w_max": jensen.w_max,
            "extraction_possible": jensen.extraction_possible,
        },
        "energy_conservation_defect": model.energy_conservation_defect(t)?,
    })))
}

/// Closed-protocol summary per swept value: extraction time, peak extracted
/// work, coherence change there, the extraction condition and timescales.
fn run_sweep(cfg: &ScenarioConfig) -> Result<Dataset> {
    let (param, values) = cfg.sweep.as_ref().expect("validated");
    let rows = values
        .par_iter()
        .map(|&v| {
            let p = param.apply(cfg.params, v);
            let tw = p.extraction_time();
            let (dc, ift) = if p.g == 0.0 {
                (0.0, 1.0)
            } else {
                let model = CompositeModel::closed_qubit(&p)?;
                let fw = forward_ensemble(&model, &qubit::initial_state(&p)?, tw)?;
                (qubit::coherence_change(&p, tw)?, integral_ft(&fw))
            };
            let tau_a = if p.g == 0.0 { 0.0 } else { qubit::adiabatic_time(&p, 256)? };
            Ok(vec![
                v,
                tw,
                p.beta * qubit::work_amplitude(&p).min(0.0),
                dc,
                if qubit::extraction_condition(&p) { 1.0 } else { 0.0 },
                ift,
                tau_a,
                p.protocol_period(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::table(
        &["value", "tau_W", "betaW_min", "deltaC_at_tau_W", "extraction", "integral_ft", "tau_A", "tau_P"],
        rows,
    ))
}

fn time_json(t: f64) -> Value {
    if t.is_finite() {
        json!(t)
    } else {
        Value::Null
    }
}

/// Timescales and the two regime criteria for the configured scenario:
/// unitary `τ_P ≤ 10 τ_A`, nonunitary `τ_D ≥ 5 τ_W` (vacuous when closed).
pub fn report_criteria(cfg: &ScenarioConfig) -> Result<Value> {
    let p = cfg.params;
    let tau_p = p.protocol_period();
    let tau_a = if p.g == 0.0 { 0.0 } else { qubit::adiabatic_time(&p, 256)? };
    let rho0 = qubit::initial_state(&p)?;
    let cases: Vec<(String, Damping)> = match cfg.scenario {
        Scenario::Fig3 => FIG3_RATIOS.iter().map(|&r| (format!("tau_d_ratio={r}"), Damping::TauRatio(r))).collect(),
        _ => vec![("configured".into(), cfg.damping)],
    };
    let mut out = Vec::new();
    for (label, damping) in cases {
        let gamma = cfg.gamma_for(damping)?;
        let tau_d = if gamma == 0.0 {
            f64::INFINITY
        } else {
            decoherence_time_general(&LindbladModel::driven_qubit(&p, gamma, cfg.nbar)?, &rho0)?
        };
        out.push(json!({
            "case": label,
            "gamma": gamma,
            "tau_D": time_json(tau_d),
            "nonunitary_criterion": tau_d >= NONUNITARY_FACTOR * p.extraction_time(),
        }));
    }
    Ok(json!({
        "scenario": cfg.scenario.name(),
        "tau_P": tau_p,
        "tau_A": tau_a,
        "tau_R": p.rabi_period(),
        "tau_W": p.extraction_time(),
        "unitary_criterion": tau_p <= UNITARY_FACTOR * tau_a,
        "cases": out,
    }))
}

/// `ΔF_t` of the driven qubit (zero: the spectrum of `H_t` is fixed).
pub fn qubit_free_energy_change(p: &DrivenQubitParams, t: f64) -> Result<f64> {
    Ok(free_energy(&qubit::hamiltonian_at(p, t), p.beta)? - free_energy(&qubit::hamiltonian_at(p, 0.0), p.beta)?)
}
