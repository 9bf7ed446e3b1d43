//! Scenario files: JSON with field names following the usual symbols
//! (`H0`, `Hq`, `HQ`, `W`, `What`, `Phi`) and complex entries as `[re, im]`.

use crate::generate::generate_network;
use crate::HarnessError;
use afrelay_core::algorithms::{PrimalAlgorithm, PrimalOptions};
use afrelay_core::lldm::{LldmOptions, ProblemSpec};
use afrelay_core::network::{ConstraintMatrices, PrecoderState, RelayNetwork, WeightedConstraint};
use afrelay_core::numerics::{block_mask, block_selector, cscg_matrix, scaled_identity, SplitMix64};
use afrelay_core::pwf::LagrangianSpec;
use afrelay_core::{CMat, C64};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

/// A complex matrix: explicit rows or one of the shorthands.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<Entry>>),
    Identity {
        identity: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    Zeros {
        zeros: usize,
    },
    /// Identity on diagonal block `block` of a relay partition, zero elsewhere.
    Selector {
        selector: Vec<usize>,
        block: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl MatrixSpec {
    pub fn from_matrix(m: &CMat) -> Self {
        Self::Rows(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| Entry::Complex([m[(i, j)].re, m[(i, j)].im])).collect())
                .collect(),
        )
    }

    /// Builds the matrix and checks it is `rows x cols`.
    pub fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> Result<CMat, String> {
        let m = match self {
            Self::Rows(r) => {
                let nr = r.len();
                let nc = r.first().map_or(0, |x| x.len());
                if r.iter().any(|x| x.len() != nc) {
                    return Err(format!("{what}: rows have different lengths"));
                }
                CMat::from_fn(nr, nc, |i, j| match r[i][j] {
                    Entry::Real(x) => C64::new(x, 0.0),
                    Entry::Complex([a, b]) => C64::new(a, b),
                })
            }
            Self::Identity { identity, scale } => scaled_identity(*identity, *scale),
            Self::Zeros { zeros } => CMat::zeros(*zeros, *zeros),
            Self::Selector { selector, block, scale } => {
                if *block >= selector.len() {
                    return Err(format!("{what}: block {block} outside a partition of {} relays", selector.len()));
                }
                block_selector(selector, *block) * C64::new(*scale, 0.0)
            }
        };
        if m.shape() != (rows, cols) {
            return Err(format!("{what} has shape {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(format!("{what} has a non-finite entry"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    /// Every link interferes with every other link.
    Full,
    None,
    /// Link `l` sees interference from links `k > l`.
    Upper,
    /// Link `l` sees interference from links `k < l`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Coupling {
    Matrix(Vec<Vec<u8>>),
    Named(CouplingKind),
}

impl Coupling {
    pub fn to_table(&self, links: usize) -> Vec<Vec<bool>> {
        match self {
            Self::Matrix(m) => m.iter().map(|r| r.iter().map(|&x| x != 0).collect()).collect(),
            Self::Named(kind) => (0..links)
                .map(|l| {
                    (0..links)
                        .map(|k| match kind {
                            CouplingKind::Full => k != l,
                            CouplingKind::None => false,
                            CouplingKind::Upper => k > l,
                            CouplingKind::Lower => k < l,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub tx_antennas: Vec<usize>,
    pub rx_antennas: Vec<usize>,
    /// Relay partition of every cluster, in hop order.
    #[serde(default)]
    pub relays: Vec<Vec<usize>>,
    #[serde(rename = "Phi")]
    pub phi: Coupling,
    #[serde(default)]
    pub source_groups: Option<Vec<usize>>,
    #[serde(default)]
    pub dest_groups: Option<Vec<usize>>,
}

impl Topology {
    pub fn links(&self) -> usize {
        self.tx_antennas.len()
    }

    pub fn cluster_antennas(&self) -> Vec<usize> {
        self.relays.iter().map(|p| p.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSource {
    /// CSCG channel entries; noise covariances are scaled identities.
    Random {
        #[serde(default = "one")]
        variance: f64,
        #[serde(default = "one")]
        relay_noise: f64,
        #[serde(default = "one")]
        dest_noise: f64,
    },
    Explicit {
        #[serde(rename = "H0", default)]
        h0: Vec<MatrixSpec>,
        #[serde(rename = "Hq", default)]
        hq: Vec<MatrixSpec>,
        #[serde(rename = "HQ", default)]
        h_dest: Vec<MatrixSpec>,
        /// `H[l][k]` for networks without relays.
        #[serde(rename = "H", default)]
        direct: Vec<Vec<MatrixSpec>>,
        /// Relay cluster noise covariances.
        #[serde(rename = "W", default)]
        relay_noise: Vec<MatrixSpec>,
        #[serde(rename = "W_dest")]
        dest_noise: Vec<MatrixSpec>,
    },
}

/// Penalty matrices: a scaled identity everywhere, or explicit per source
/// and per cluster.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PenaltySpec {
    Scale { scale: f64 },
    Matrices { source: Vec<MatrixSpec>, relay: Vec<MatrixSpec> },
}

impl PenaltySpec {
    pub fn build(&self, net: &RelayNetwork, what: &str) -> Result<ConstraintMatrices, Vec<String>> {
        match self {
            Self::Scale { scale } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(vec![format!("{what}: scale must be nonnegative")]);
                }
                Ok(ConstraintMatrices::scaled_identity(net, *scale))
            }
            Self::Matrices { source, relay } => {
                let mut errs = vec![];
                if source.len() != net.links() {
                    errs.push(format!("{what}.source has {} matrices for {} links", source.len(), net.links()));
                }
                if relay.len() != net.hops() {
                    errs.push(format!("{what}.relay has {} matrices for {} clusters", relay.len(), net.hops()));
                }
                if !errs.is_empty() {
                    return Err(errs);
                }
                let mut cm = ConstraintMatrices { source: vec![], relay: vec![] };
                for (l, m) in source.iter().enumerate() {
                    let t = net.tx_antennas(l);
                    match m.to_matrix(t, t, &format!("{what}.source[{l}]")) {
                        Ok(x) => cm.source.push(x),
                        Err(e) => errs.push(e),
                    }
                }
                for (q, m) in relay.iter().enumerate() {
                    let n = net.relay_antennas(q);
                    match m.to_matrix(n, n, &format!("{what}.relay[{q}]")) {
                        Ok(x) => cm.relay.push(x),
                        Err(e) => errs.push(e),
                    }
                }
                if errs.is_empty() {
                    if let Err(e) = cm.validate(net) {
                        errs.push(format!("{what}: {e}"));
                    }
                }
                if errs.is_empty() {
                    Ok(cm)
                } else {
                    Err(errs)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(rename = "What")]
    pub penalty: PenaltySpec,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PerLink {
    Same(f64),
    Each(Vec<f64>),
}

impl PerLink {
    pub fn expand(&self, links: usize) -> Vec<f64> {
        match self {
            Self::Same(x) => vec![*x; links],
            Self::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Inner-loop problem with fixed weights and penalties.
    Lagrangian {
        #[serde(default)]
        weights: Option<PerLink>,
        #[serde(rename = "What")]
        penalty: PenaltySpec,
    },
    /// Weighted sum-rate under linear constraints.
    P1 {
        #[serde(default)]
        weights: Option<PerLink>,
        constraints: Vec<ConstraintSpec>,
    },
    /// Linear cost under rate floors.
    P2 {
        #[serde(rename = "What")]
        cost: PenaltySpec,
        floors: PerLink,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Isotropic {
        #[serde(default = "one")]
        power: f64,
        #[serde(default = "one")]
        relay_gain: f64,
    },
    /// Seeded random covariances and block-diagonal relay matrices.
    Random {
        #[serde(default = "one")]
        scale: f64,
    },
    Explicit {
        sigma: Vec<MatrixSpec>,
        #[serde(default)]
        relays: Vec<MatrixSpec>,
    },
}

impl Default for InitConfig {
    fn default() -> Self {
        Self::Isotropic { power: 1.0, relay_gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LldmConfig {
    pub tolerance: Option<f64>,
    pub max_outer_iterations: Option<usize>,
    pub initial_lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(default = "default_algorithm")]
    pub name: String,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub armijo_sigma: Option<f64>,
    pub armijo_beta: Option<f64>,
    pub initial_step: Option<f64>,
    pub stall_window: Option<usize>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub lldm: LldmConfig,
    /// Algorithms compared by `bench`.
    #[serde(default = "default_bench")]
    pub bench: Vec<String>,
    /// Distance from the final objective used by `bench`.
    #[serde(default = "default_bench_tolerance")]
    pub bench_tolerance: f64,
    /// Require `bench` mean iterations to be non-decreasing in list order.
    #[serde(default)]
    pub bench_ordered: bool,
}

fn default_algorithm() -> String {
    "pwf".into()
}

fn default_bench() -> Vec<String> {
    vec!["ga".into(), "pwf".into()]
}

fn default_bench_tolerance() -> f64 {
    1e-3
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            name: default_algorithm(),
            max_iterations: None,
            tolerance: None,
            armijo_sigma: None,
            armijo_beta: None,
            initial_step: None,
            stall_window: None,
            init: InitConfig::default(),
            lldm: LldmConfig::default(),
            bench: default_bench(),
            bench_tolerance: default_bench_tolerance(),
            bench_ordered: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    /// Half-open range.
    Range { start: u64, end: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, end } => (*start..*end).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub topology: Topology,
    pub channels: ChannelSource,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub seeds: Option<SeedSpec>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Problem instantiated on a concrete network.
#[derive(Debug, Clone)]
pub enum Problem {
    Inner(LagrangianSpec),
    Outer(ProblemSpec),
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub algorithm: PrimalAlgorithm,
    pub source: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Self::parse(text, None)
    }

    fn parse(text: &str, path: Option<&Path>) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            HarnessError::Parse {
                path: path.map(|p| p.display().to_string()).unwrap_or_else(|| "<string>".into()),
                field: e.path().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Self::from_file(file, path)
    }

    pub fn from_file(file: ScenarioFile, path: Option<&Path>) -> Result<Self, HarnessError> {
        let algorithm: PrimalAlgorithm = file
            .algorithm
            .name
            .parse()
            .map_err(|e: afrelay_core::Error| HarnessError::Validation(vec![format!("algorithm.name: {e}")]))?;
        let s = Self { file, algorithm, source: path.map(Path::to_path_buf) };
        s.validate()?;
        Ok(s)
    }

    /// Runs every dimension and value check against the seed-0 network.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = topology_errors(&self.file.topology);
        for b in &self.file.algorithm.bench {
            if b.parse::<PrimalAlgorithm>().is_err() {
                errs.push(format!("algorithm.bench: unknown algorithm '{b}'"));
            }
        }
        if !errs.is_empty() {
            return Err(HarnessError::Validation(errs));
        }
        let net = generate_network(self, self.seeds().first().copied().unwrap_or(0))?;
        self.problem(&net)?;
        self.init_state(&net, 0)?;
        if let Err(e) = self.primal_options().validate() {
            return Err(HarnessError::Validation(vec![format!("algorithm: {e}")]));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.file.seeds.as_ref().map_or_else(|| vec![0], SeedSpec::seeds)
    }

    pub fn problem(&self, net: &RelayNetwork) -> Result<Problem, HarnessError> {
        let links = net.links();
        let weights = |w: &Option<PerLink>| -> Result<Vec<f64>, HarnessError> {
            let v = w.as_ref().map_or_else(|| vec![1.0; links], |w| w.expand(links));
            if v.len() != links {
                return Err(HarnessError::Validation(vec![format!("problem.weights has {} entries for {links} links", v.len())]));
            }
            Ok(v)
        };
        let problem = match &self.file.problem {
            ProblemConfig::Lagrangian { weights: w, penalty } => {
                let penalty = penalty.build(net, "problem.What").map_err(HarnessError::Validation)?;
                let lag = LagrangianSpec { weights: weights(w)?, penalty };
                lag.validate(net).map_err(|e| HarnessError::Validation(vec![format!("problem: {e}")]))?;
                Problem::Inner(lag)
            }
            ProblemConfig::P1 { weights: w, constraints } => {
                let mut errs = vec![];
                let mut list = vec![];
                for (n, c) in constraints.iter().enumerate() {
                    match c.penalty.build(net, &format!("problem.constraints[{n}].What")) {
                        Ok(m) => list.push(WeightedConstraint { matrices: m, budget: c.budget }),
                        Err(e) => errs.extend(e),
                    }
                }
                if !errs.is_empty() {
                    return Err(HarnessError::Validation(errs));
                }
                Problem::Outer(ProblemSpec::P1 { weights: weights(w)?, constraints: list })
            }
            ProblemConfig::P2 { cost, floors } => {
                let cost = cost.build(net, "problem.What").map_err(HarnessError::Validation)?;
                Problem::Outer(ProblemSpec::P2 { cost, floors: floors.expand(links) })
            }
        };
        if let Problem::Outer(p) = &problem {
            p.validate(net).map_err(|e| HarnessError::Validation(vec![format!("problem: {e}")]))?;
            if let Some(l0) = &self.file.algorithm.lldm.initial_lambda {
                if l0.len() != p.len() {
                    return Err(HarnessError::Validation(vec![format!(
                        "algorithm.lldm.initial_lambda has {} entries for {} constraints",
                        l0.len(),
                        p.len()
                    )]));
                }
            }
        }
        Ok(problem)
    }

    /// Initial state for a seed. Random initial states use a stream
    /// separate from the channel draws.
    pub fn init_state(&self, net: &RelayNetwork, seed: u64) -> Result<PrecoderState, HarnessError> {
        let st = match &self.file.algorithm.init {
            InitConfig::Isotropic { power, relay_gain } => PrecoderState::isotropic(net, *power, *relay_gain),
            InitConfig::Random { scale } => random_state(net, seed ^ 0x5eed_0000_0000_0001, *scale),
            InitConfig::Explicit { sigma, relays } => {
                let mut errs = vec![];
                if sigma.len() != net.links() || relays.len() != net.hops() {
                    return Err(HarnessError::Validation(vec![format!(
                        "algorithm.init: {} covariances and {} relay matrices for {} links and {} clusters",
                        sigma.len(),
                        relays.len(),
                        net.links(),
                        net.hops()
                    )]));
                }
                let mut st = PrecoderState { sigma: vec![], relays: vec![] };
                for (l, m) in sigma.iter().enumerate() {
                    let t = net.tx_antennas(l);
                    match m.to_matrix(t, t, &format!("algorithm.init.sigma[{l}]")) {
                        Ok(x) => st.sigma.push(x),
                        Err(e) => errs.push(e),
                    }
                }
                for (q, m) in relays.iter().enumerate() {
                    let n = net.relay_antennas(q);
                    match m.to_matrix(n, n, &format!("algorithm.init.relays[{q}]")) {
                        Ok(x) => st.relays.push(x),
                        Err(e) => errs.push(e),
                    }
                }
                if !errs.is_empty() {
                    return Err(HarnessError::Validation(errs));
                }
                st
            }
        };
        st.validate(net).map_err(|e| HarnessError::Validation(vec![format!("algorithm.init: {e}")]))?;
        Ok(st)
    }

    pub fn primal_options(&self) -> PrimalOptions {
        let a = &self.file.algorithm;
        let d = PrimalOptions::default();
        PrimalOptions {
            max_iterations: a.max_iterations.unwrap_or(d.max_iterations),
            tolerance: a.tolerance.unwrap_or(d.tolerance),
            armijo_sigma: a.armijo_sigma.unwrap_or(d.armijo_sigma),
            armijo_beta: a.armijo_beta.unwrap_or(d.armijo_beta),
            initial_step: a.initial_step.unwrap_or(d.initial_step),
            stall_window: a.stall_window.unwrap_or(d.stall_window),
            record_trace: true,
            monitors: vec![],
        }
    }

    pub fn lldm_options(&self) -> LldmOptions {
        let a = &self.file.algorithm;
        let d = LldmOptions::default();
        let inner = PrimalOptions { record_trace: false, ..self.primal_options() };
        LldmOptions {
            primal: self.algorithm,
            inner: PrimalOptions { max_iterations: a.max_iterations.unwrap_or(d.inner.max_iterations), ..inner },
            tolerance: a.lldm.tolerance.unwrap_or(d.tolerance),
            max_outer_iterations: a.lldm.max_outer_iterations.unwrap_or(d.max_outer_iterations),
            initial_lambda: a.lldm.initial_lambda.clone(),
            ..d
        }
    }

    pub fn bench_algorithms(&self) -> Vec<PrimalAlgorithm> {
        self.file.algorithm.bench.iter().filter_map(|b| b.parse().ok()).collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    Scenario::parse(&text, Some(path))
}

fn topology_errors(t: &Topology) -> Vec<String> {
    let mut errs = vec![];
    let l = t.links();
    if l == 0 {
        errs.push("topology.tx_antennas: no links".into());
    }
    if t.rx_antennas.len() != l {
        errs.push(format!("topology.rx_antennas has {} entries for {l} links", t.rx_antennas.len()));
    }
    if let Coupling::Matrix(m) = &t.phi {
        if m.len() != l || m.iter().any(|r| r.len() != l) {
            errs.push(format!("topology.Phi must be {l}x{l}"));
        } else {
            for (i, row) in m.iter().enumerate() {
                if row[i] != 0 {
                    errs.push(format!("topology.Phi[{i}][{i}] must be zero"));
                }
                if row.iter().any(|&x| x > 1) {
                    errs.push(format!("topology.Phi row {i} has entries other than 0 and 1"));
                }
            }
        }
    }
    for (name, g) in [("source_groups", &t.source_groups), ("dest_groups", &t.dest_groups)] {
        if let Some(g) = g {
            if g.len() != l {
                errs.push(format!("topology.{name} has {} entries for {l} links", g.len()));
            }
        }
    }
    for (q, p) in t.relays.iter().enumerate() {
        if p.is_empty() || p.contains(&0) {
            errs.push(format!("topology.relays[{q}] has an empty relay"));
        }
    }
    errs
}

pub fn random_state(net: &RelayNetwork, seed: u64, scale: f64) -> PrecoderState {
    let mut rng = SplitMix64::new(seed);
    let sigma = (0..net.links())
        .map(|l| {
            let t = net.tx_antennas(l);
            let a = cscg_matrix(&mut rng, t, t, scale / t as f64);
            &a * a.adjoint()
        })
        .collect();
    let relays = (0..net.hops())
        .map(|q| {
            let n = net.relay_antennas(q);
            block_mask(&cscg_matrix(&mut rng, n, n, scale / n as f64), net.partition(q))
        })
        .collect();
    PrecoderState { sigma, relays }
}
