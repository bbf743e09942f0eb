//! Experiment configuration: a single JSON document per run.

use serde::{Deserialize, Serialize};

/// Row-major matrix as a list of rows.
pub type Mat = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Flow,
    Pli,
    Lffnn,
    Iss,
    Riccati,
    Portrait,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Pli => "pli",
            Command::Lffnn => "lffnn",
            Command::Iss => "iss",
            Command::Riccati => "riccati",
            Command::Portrait => "portrait",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `ẋ = u`, `q = r = 1`.
    #[default]
    Integrator,
    /// `A = 0₂`, `B = Q = R = I₂`.
    PlanarZero,
    /// `ẋ = a x + b u` with scalar costs.
    ScalarA {
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        q: f64,
        #[serde(default = "one")]
        r: f64,
    },
    Explicit {
        a: Mat,
        b: Mat,
        q: Mat,
        r: Mat,
        #[serde(default)]
        sigma0: Option<Mat>,
        /// Stabilizing gain to start policy iteration from; not needed when
        /// `a` is Hurwitz.
        #[serde(default)]
        riccati_seed: Option<Mat>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FlowKindConfig {
    Gradient,
    Natural,
    GaussNewton,
    Factored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceKindConfig {
    Zero,
    Constant,
    /// `sin(frequency·t + phase)`, angular frequency.
    Sinusoid {
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    PiecewiseStep {
        switch_times: Vec<f64>,
        levels: Vec<f64>,
    },
    BoundedRandom {
        seed: u64,
        #[serde(default = "one")]
        bucket: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceConfig {
    #[serde(flatten)]
    pub kind: DisturbanceKindConfig,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub kind: FlowKindConfig,
    pub eta: f64,
    pub t_max: f64,
    pub samples: usize,
    pub stop_grad_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Initial gain for plain flows.
    pub k0: Option<Mat>,
    /// Initial factors `k₁ … k_N` for factored flows; drawn from the seed
    /// with hidden widths `hidden` when absent.
    pub factors: Option<Vec<Mat>>,
    pub hidden: Vec<usize>,
    pub disturbance: Option<DisturbanceConfig>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kind: FlowKindConfig::Gradient,
            eta: 1.0,
            t_max: 50.0,
            samples: 400,
            stop_grad_tol: 1e-9,
            rtol: 1e-8,
            atol: 1e-10,
            k0: None,
            factors: None,
            hidden: vec![2],
            disturbance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PliModel {
    /// The continuous-time LQR landscape of the problem.
    Lqr,
    /// Explicit-Euler discretization of the integrator with step `h`.
    DtEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Scalar gains on a grid over `[k_min, k_max]`.
    Grid,
    /// Stabilizing gains drawn uniformly within `radius` of the optimum.
    Random,
    /// Snapshots of gradient flows from random stabilizing inits, using the
    /// flow section for horizon and sampling.
    Trajectories,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PliConfig {
    pub model: PliModel,
    pub h: f64,
    pub sampler: Sampler,
    pub k_min: f64,
    pub k_max: f64,
    pub points: usize,
    pub log_spacing: bool,
    pub count: usize,
    pub radius: f64,
    /// Sublevel bound for the sgl constant; the largest sampled regret when absent.
    pub rho: Option<f64>,
    pub fit_grid_points: usize,
}

impl Default for PliConfig {
    fn default() -> Self {
        Self {
            model: PliModel::Lqr,
            h: 0.1,
            sampler: Sampler::Grid,
            k_min: 0.1,
            k_max: 10.0,
            points: 200,
            log_spacing: true,
            count: 200,
            radius: 1.0,
            rho: None,
            fit_grid_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IssConfig {
    pub kind: FlowKindConfig,
    pub amplitudes: Vec<f64>,
    pub disturbance: DisturbanceConfig,
    pub phases: usize,
    /// Defaults to 200 over the slowest closed-loop rate, capped at 1e4.
    pub horizon: Option<f64>,
    pub samples: usize,
    pub inits: Option<Vec<Mat>>,
    pub factored_inits: Option<Vec<Vec<Mat>>>,
    /// Number of random inits drawn from the seed when none are given.
    pub random_inits: usize,
    pub radius: f64,
}

impl Default for IssConfig {
    fn default() -> Self {
        Self {
            kind: FlowKindConfig::Gradient,
            amplitudes: vec![0.0, 0.01, 0.05, 0.1],
            disturbance: DisturbanceConfig {
                kind: DisturbanceKindConfig::BoundedRandom { seed: 0, bucket: 1.0 },
                amplitude: 0.0,
                direction: None,
            },
            phases: 3,
            horizon: None,
            samples: 400,
            inits: None,
            factored_inits: None,
            random_inits: 3,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortraitConfig {
    pub k1_range: [f64; 2],
    pub k2_range: [f64; 2],
    pub n1: usize,
    pub n2: usize,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        Self {
            k1_range: [-3.0, 3.0],
            k2_range: [-3.0, 3.0],
            n1: 41,
            n2: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub pli: PliConfig,
    #[serde(default)]
    pub iss: IssConfig,
    #[serde(default)]
    pub portrait: PortraitConfig,
    /// Output path prefix; files are `{out}_summary.json` and friends.
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            problem: ProblemConfig::default(),
            flow: FlowConfig::default(),
            pli: PliConfig::default(),
            iss: IssConfig::default(),
            portrait: PortraitConfig::default(),
            out: default_out(),
            seed: 0,
        }
    }

    /// Parses inline JSON (leading `{`) or reads a file.
    pub fn load(source: &str) -> Result<Self, String> {
        let text = if source.trim_start().starts_with('{') {
            source.to_owned()
        } else {
            std::fs::read_to_string(source).map_err(|e| format!("cannot read config {source}: {e}"))?
        };
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn one() -> f64 {
    1.0
}

fn default_out() -> String {
    "pliflows_out/run".to_owned()
}
