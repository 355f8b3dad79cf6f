//! TOML schemas of the experiment specs. Every table rejects unknown fields
//! so schema violations surface with field paths.

use nssteer_core::control::StaircaseCaps;
use nssteer_core::isotopy::IsotopyTarget;
use nssteer_core::nse::SimConfig;
use serde::{Deserialize, Serialize};

/// A field constructor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// Random divergence-free field on the truncation.
    Random {
        radius: i64,
        amplitude: f64,
        /// Optional (order, value) rescaling of the Sobolev norm.
        #[serde(default)]
        sobolev_norm: Option<(f64, f64)>,
    },
    /// Random field in the span of the experiment's control space.
    RandomInSpan {
        amplitude: f64,
        #[serde(default)]
        sobolev_norm: Option<(f64, f64)>,
    },
    /// Load from a field snapshot JSON file.
    Snapshot { path: String },
    /// A single basis field.
    Basis { mode: [i64; 3], kind: String },
}

/// A control space.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    /// One of: e12, lavt8, lsdfavt6, lsdfavt6-raw.
    Named(String),
    /// The span space of a lattice set.
    Lattice { vectors: Vec<[i64; 3]> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturateSpec {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub depth: usize,
    pub radius: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCertificateSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default)]
    pub seed: u64,
    pub config: SimConfig,
    pub initial: FieldSpec,
    #[serde(default)]
    pub fixed_force: Option<FieldSpec>,
    #[serde(default)]
    pub control: Option<FieldSpec>,
    /// Times at which state snapshots are written.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default)]
    pub seed: u64,
    pub target: IsotopyTarget,
    pub grid_res: usize,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// Override the advecting field (needed for multi-shear targets).
    #[serde(default)]
    pub advect_with_field: Option<FieldSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerSpec {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub epsilon: f64,
    pub config: SimConfig,
    pub u0: FieldSpec,
    pub u1: FieldSpec,
    pub target: IsotopyTarget,
    #[serde(default)]
    pub fixed_force: Option<FieldSpec>,
    #[serde(default)]
    pub caps: StaircaseCaps,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityProbeSpec {
    #[serde(default)]
    pub seed: u64,
    pub base: FieldSpec,
    pub bump: FieldSpec,
    pub horizon: f64,
    pub oscillation_indices: Vec<u32>,
    pub lambda: f64,
    pub grid_res: usize,
    pub dt: f64,
    pub sobolev_k: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzProbeSpec {
    #[serde(default)]
    pub seed: u64,
    pub config: SimConfig,
    pub initial: FieldSpec,
    pub direction: FieldSpec,
    /// "initial-state" or "control".
    pub slot: String,
    pub sizes: Vec<f64>,
}

/// An experiment: one kind plus its parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Saturate(SaturateSpec),
    VerifyCertificate(VerifyCertificateSpec),
    Simulate(SimulateSpec),
    Flow(FlowSpec),
    Steer(SteerSpec),
    StabilityProbe(StabilityProbeSpec),
    LipschitzProbe(LipschitzProbeSpec),
}

impl ExperimentSpec {
    pub fn seed(&self) -> u64 {
        match self {
            ExperimentSpec::Saturate(s) => s.seed,
            ExperimentSpec::VerifyCertificate(s) => s.seed,
            ExperimentSpec::Simulate(s) => s.seed,
            ExperimentSpec::Flow(s) => s.seed,
            ExperimentSpec::Steer(s) => s.seed,
            ExperimentSpec::StabilityProbe(s) => s.seed,
            ExperimentSpec::LipschitzProbe(s) => s.seed,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::Saturate(_) => "saturate",
            ExperimentSpec::VerifyCertificate(_) => "verify-certificate",
            ExperimentSpec::Simulate(_) => "simulate",
            ExperimentSpec::Flow(_) => "flow",
            ExperimentSpec::Steer(_) => "steer",
            ExperimentSpec::StabilityProbe(_) => "stability-probe",
            ExperimentSpec::LipschitzProbe(_) => "lipschitz-probe",
        }
    }
}
