//! Experiment configuration: TOML schema, validation, and resolution into core
//! types.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use skspin::coherent::build_grid;
use skspin::{
    Component, ContourParams, HamiltonianSpec, HamiltonianTerm, LatticeSpec, Ordering,
    QuadratureGrid, SpinRep,
};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Exact,
    LatticeCorrelator,
    ContinuumTable,
    Mc,
    ZtildeCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Exact => "exact",
            Task::LatticeCorrelator => "lattice-correlator",
            Task::ContinuumTable => "continuum-table",
            Task::Mc => "mc",
            Task::ZtildeCheck => "ztilde-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub hamiltonian: HamiltonianConfig,
    pub contour: ContourConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuum: Option<ContinuumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ztilde: Option<ZtildeConfig>,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `−(j/2)(s1 s1 + s3 s3)` on the bond of a two-site lattice.
    DemoXz,
    /// `coupling · Σ_bonds Σ_components s_c s_c`.
    NearestNeighbor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default)]
    pub label: String,
    pub sites: usize,
    #[serde(default = "default_two_s")]
    pub two_s: u32,
    /// Bonds; defaults to an open chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<u8>>,
    /// Explicit terms; `factors` are `[site, component]` pairs, components 1..3.
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

fn default_two_s() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coupling: f64,
    pub factors: Vec<(usize, u8)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(n) => vec![*n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourConfig {
    pub beta: f64,
    pub t_max: f64,
    /// Timeslices per leg; a list sweeps over `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<OneOrMany>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    /// Compare against a doubled grid before running.
    #[serde(default = "default_true")]
    pub check: bool,
    #[serde(default = "default_quad_tol")]
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            n_theta: default_n_theta(),
            n_phi: default_n_phi(),
            check: true,
            tol: default_quad_tol(),
        }
    }
}

fn default_n_theta() -> usize {
    12
}
fn default_n_phi() -> usize {
    24
}
fn default_true() -> bool {
    true
}
fn default_quad_tol() -> f64 {
    skspin::evaluator::DEFAULT_QUADRATURE_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_width")]
    pub proposal_width: f64,
    pub n_samples: usize,
    #[serde(default = "default_therm")]
    pub n_therm: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// Also evaluate the same-`N` matrix trace for comparison.
    #[serde(default = "default_true")]
    pub compare_trace: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

fn default_width() -> f64 {
    PI
}
fn default_therm() -> usize {
    1000
}
fn default_chains() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumConfig {
    pub windows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZtildeConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    skspin::oracle::DEFAULT_FD_STEP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Fixed(f64),
    /// `"slices"`: every forward-leg time `k Δt`, `k = 0..N`.
    Keyword(String),
    Range {
        start: f64,
        stop: f64,
        step: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    #[serde(default = "default_ordering")]
    pub ordering: String,
    pub x: usize,
    pub i: u8,
    pub xp: usize,
    pub ip: u8,
    pub t: TimeSpec,
    #[serde(default)]
    pub t_prime: f64,
}

fn default_ordering() -> String {
    Ordering::Unordered.name().to_string()
}

#[derive(Debug, Clone)]
pub enum Times {
    Slices,
    List(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Observable {
    pub ordering: Ordering,
    pub x: usize,
    pub i: Component,
    pub xp: usize,
    pub ip: Component,
    pub times: Times,
    pub t_prime: f64,
}

impl Observable {
    pub fn label(&self) -> String {
        format!(
            "{} <{}({},t) {}({},t')>",
            self.ordering.name(),
            self.i,
            self.x,
            self.ip,
            self.xp
        )
    }

    /// Physical times for a contour with `n` slices per leg.
    pub fn times(&self, contour: Option<&ContourParams>) -> Result<Vec<f64>, CliError> {
        match (&self.times, contour) {
            (Times::List(v), _) => Ok(v.clone()),
            (Times::Slices, Some(c)) => Ok((0..c.slices(skspin::Leg::Forward))
                .map(|k| k as f64 * c.dt())
                .collect()),
            (Times::Slices, None) => Err(CliError::validation("t = \"slices\" needs contour.n")),
        }
    }
}

/// A validated config with its core objects built.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: HamiltonianSpec,
    pub grid: QuadratureGrid,
    pub ns: Vec<usize>,
    pub observables: Vec<Observable>,
}

impl Experiment {
    pub fn contour(&self, n: usize) -> Result<ContourParams, CliError> {
        Ok(ContourParams::new(
            self.config.contour.beta,
            self.config.contour.t_max,
            n,
        )?)
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::parse(e.to_string()))
}

fn component(label: u8) -> Result<Component, CliError> {
    Ok(Component::from_label(label)?)
}

fn build_spec(h: &HamiltonianConfig) -> Result<HamiltonianSpec, CliError> {
    let rep = SpinRep::new(h.two_s)?;
    let lattice = match &h.adjacency {
        Some(adj) => LatticeSpec::new(
            h.sites,
            adj.iter().map(|b| (b[0], b[1])).collect(),
            h.label.clone(),
        )?,
        None => LatticeSpec::chain(h.sites, false)?,
    };
    let mut spec = match h.preset {
        None => HamiltonianSpec::free(lattice, rep),
        Some(Preset::DemoXz) => {
            if h.sites != 2 || h.two_s != 1 {
                return Err(CliError::validation(
                    "preset demo-xz needs sites = 2 and two_s = 1",
                ));
            }
            HamiltonianSpec::demo_xz(h.j.unwrap_or(1.0))
        }
        Some(Preset::NearestNeighbor) => {
            let coupling = h.coupling.ok_or_else(|| {
                CliError::validation("preset nearest-neighbor needs hamiltonian.coupling")
            })?;
            let comps = h
                .components
                .as_deref()
                .unwrap_or(&[1, 2, 3])
                .iter()
                .map(|&c| component(c))
                .collect::<Result<Vec<_>, _>>()?;
            HamiltonianSpec::nearest_neighbor(lattice, rep, coupling, &comps)?
        }
    };
    for term in &h.terms {
        let factors = term
            .factors
            .iter()
            .map(|&(site, c)| Ok((site, component(c)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        spec.terms
            .push(HamiltonianTerm::new(term.coupling, factors));
    }
    spec.validate()?;
    Ok(spec)
}

/// The config with the Hamiltonian written out as explicit terms and every
/// default filled in.
fn resolve(mut config: ExperimentConfig, spec: &HamiltonianSpec) -> ExperimentConfig {
    let h = &mut config.hamiltonian;
    h.preset = None;
    h.j = None;
    h.coupling = None;
    h.components = None;
    h.adjacency = Some(
        spec.lattice
            .adjacency()
            .iter()
            .map(|&(a, b)| [a, b])
            .collect(),
    );
    h.terms = spec
        .terms
        .iter()
        .map(|t| TermConfig {
            coupling: t.coupling,
            factors: t.factors.iter().map(|&(s, c)| (s, c.label())).collect(),
        })
        .collect();
    if config.task == Task::Mc {
        config.seed.get_or_insert(0);
    }
    if config.task == Task::ZtildeCheck && config.ztilde.is_none() {
        config.ztilde = Some(ZtildeConfig { eps: default_eps() });
    }
    config
}

pub fn validate(config: ExperimentConfig) -> Result<Experiment, CliError> {
    let spec = build_spec(&config.hamiltonian)?;
    let c = &config.contour;
    if !(c.beta > 0.0 && c.t_max > 0.0) {
        return Err(CliError::validation(
            "contour.beta and contour.t_max must be positive",
        ));
    }
    let mut ns = c.n.as_ref().map(OneOrMany::values).unwrap_or_default();
    if ns.contains(&0) {
        return Err(CliError::validation("contour.n values must be positive"));
    }
    let q = &config.quadrature;
    let grid = build_grid(spec.rep, spec.sites(), q.n_theta, q.n_phi)?;

    let mut observables = Vec::new();
    for o in &config.observables {
        let ordering = Ordering::parse(&o.ordering)
            .ok_or_else(|| CliError::validation(format!("unknown ordering {:?}", o.ordering)))?;
        for site in [o.x, o.xp] {
            if site >= spec.sites() {
                return Err(CliError::validation(format!(
                    "observable site {site} outside 0..{}",
                    spec.sites()
                )));
            }
        }
        let times = match &o.t {
            TimeSpec::Fixed(t) => Times::List(vec![*t]),
            TimeSpec::Keyword(k) if k == "slices" => Times::Slices,
            TimeSpec::Keyword(k) => {
                return Err(CliError::validation(format!("unknown time keyword {k:?}")))
            }
            TimeSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(CliError::validation(
                        "time range needs step > 0 and stop >= start",
                    ));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Times::List((0..count).map(|k| start + k as f64 * step).collect())
            }
        };
        observables.push(Observable {
            ordering,
            x: o.x,
            i: component(o.i)?,
            xp: o.xp,
            ip: component(o.ip)?,
            times,
            t_prime: o.t_prime,
        });
    }

    let needs_n = matches!(
        config.task,
        Task::LatticeCorrelator | Task::Mc | Task::ZtildeCheck
    );
    if needs_n && ns.is_empty() {
        return Err(CliError::validation(format!(
            "task {} needs contour.n",
            config.task.name()
        )));
    }
    if config.task != Task::ContinuumTable && observables.is_empty() {
        return Err(CliError::validation(
            "at least one [[observables]] entry is required",
        ));
    }
    match config.task {
        Task::Mc => {
            let mc = config
                .mc
                .as_ref()
                .ok_or_else(|| CliError::validation("task mc needs an [mc] section"))?;
            if ns.len() != 1 {
                return Err(CliError::validation("task mc takes a single contour.n"));
            }
            if mc.n_samples == 0 || mc.chains == 0 || !(mc.proposal_width > 0.0) {
                return Err(CliError::validation(
                    "mc needs n_samples, chains and proposal_width positive",
                ));
            }
        }
        Task::ContinuumTable => {
            let cont = config.continuum.as_ref().ok_or_else(|| {
                CliError::validation("task continuum-table needs a [continuum] section")
            })?;
            if cont.windows.is_empty() {
                return Err(CliError::validation("continuum.windows is empty"));
            }
            if observables
                .iter()
                .any(|o| !matches!(&o.times, Times::List(v) if v.len() == 1))
            {
                return Err(CliError::validation(
                    "continuum-table observables need a single fixed t",
                ));
            }
            ns = cont.windows.iter().flatten().copied().collect();
            ns.sort_unstable();
            ns.dedup();
        }
        Task::ZtildeCheck => {
            if let Some(z) = &config.ztilde {
                if !(z.eps > 0.0) {
                    return Err(CliError::validation("ztilde.eps must be positive"));
                }
            }
        }
        Task::Exact | Task::LatticeCorrelator => {}
    }
    let config = resolve(config, &spec);
    Ok(Experiment {
        config,
        spec,
        grid,
        ns,
        observables,
    })
}
