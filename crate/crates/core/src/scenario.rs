//! Run configuration and the registry of named experiments.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::two_agent_equilibrium_data;
use crate::dynamics::{AgentState, BoostParams, Ensemble, LsParams, Model, TwoAgentWeights};
use crate::error::{FlockError, Result};
use crate::geometry::{normalize, tangent_project, Vec3, UNIT_TOL};
use crate::integrator::IntegratorConfig;
use crate::kernels::{PsiKernel, SigmaKernel};
use crate::landscape::MinimizeConfig;

/// Positions of the six-agent example, rounded to four digits as printed.
pub const REFERENCE_N6_X: [[f64; 3]; 6] = [
    [-0.1192, 0.5108, -0.8514],
    [0.8547, -0.3671, 0.3671],
    [0.7076, 0.2235, 0.6704],
    [0.3600, 0.7364, 0.5728],
    [0.8977, -0.4406, 0.0000],
    [0.8754, -0.2398, -0.4197],
];

/// Velocities of the six-agent example, rounded to four digits as printed.
pub const REFERENCE_N6_V: [[f64; 3]; 6] = [
    [-1.1540, -1.7264, -0.8743],
    [-1.3068, 0.0568, 3.0000],
    [0.9331, 1.5789, -1.5113],
    [2.7989, 0.7976, -2.7848],
    [-1.0254, -2.0892, 2.5773],
    [0.4591, 0.8375, 0.4789],
];

pub const EXP_PSI: PsiKernel = PsiKernel::ExpDecay { scale: 2.0 };

pub const FIG3_SIGMA_R: [f64; 8] = [0.0, 0.01, 0.04, 0.08, 0.1, 0.2, 0.3, 0.5];
pub const FIG7_BETA: [f64; 8] = [0.0, 0.5, 1.0, 1.25, 1.26, 1.5, 2.0, 5.0];

/// Where the initial ensemble comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InitialData {
    /// Used as given; must already be admissible for sphere-constrained models.
    Explicit { agents: Vec<AgentState> },
    /// A built-in data set, e.g. `paper_n6`.
    Named { name: String },
    /// Positions uniform in `[-1,1]³`, velocities uniform in `[-speed_max, speed_max]³`,
    /// then normalized and tangent-projected.
    Random {
        seed: u64,
        n: usize,
        #[serde(default = "default_speed_max")]
        speed_max: f64,
    },
    /// Positions in a spherical cap of angular radius `cap_radius` around a random
    /// center, tangent velocities of norm at most `speed_max`.
    Clustered {
        seed: u64,
        n: usize,
        #[serde(default = "default_cap_radius")]
        cap_radius: f64,
        #[serde(default = "default_cluster_speed")]
        speed_max: f64,
    },
}

fn default_speed_max() -> f64 {
    3.0
}

fn default_cap_radius() -> f64 {
    0.2
}

fn default_cluster_speed() -> f64 {
    0.05
}

impl InitialData {
    pub fn build(&self, model: &Model) -> Result<Ensemble> {
        match self {
            InitialData::Explicit { agents } => {
                let ens = Ensemble::new(agents.clone())?;
                if model.is_sphere_constrained() && ens.constraint_drift() > UNIT_TOL {
                    return Err(FlockError::config(format!(
                        "explicit initial data are not admissible (constraint drift {:e})",
                        ens.constraint_drift()
                    )));
                }
                Ok(ens)
            }
            InitialData::Named { name } => named_data(name),
            InitialData::Random { seed, n, speed_max } => random_admissible(*seed, *n, *speed_max),
            InitialData::Clustered {
                seed,
                n,
                cap_radius,
                speed_max,
            } => clustered(*seed, *n, *cap_radius, *speed_max),
        }
    }

    /// Replaces the seed of random sources; no effect otherwise.
    pub fn reseed(&mut self, new_seed: u64) {
        match self {
            InitialData::Random { seed, .. } | InitialData::Clustered { seed, .. } => {
                *seed = new_seed
            }
            _ => {}
        }
    }
}

/// Normalize the position, then project the velocity onto its tangent plane.
pub fn admissibilize(x: Vec3, v: Vec3) -> Result<AgentState> {
    let x = normalize(x)?;
    Ok(AgentState::new(x, tangent_project(x, v)?))
}

pub fn named_data(name: &str) -> Result<Ensemble> {
    match name {
        "paper_n6" => reference_n6(),
        other => Err(FlockError::config(format!(
            "unknown initial data set `{other}`"
        ))),
    }
}

/// The six-agent example. The printed digits are only admissible to about 1e-4,
/// so each agent is admissibilized before use.
pub fn reference_n6() -> Result<Ensemble> {
    let agents = REFERENCE_N6_X
        .iter()
        .zip(&REFERENCE_N6_V)
        .map(|(&x, &v)| admissibilize(Vec3(x), Vec3(v)))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(agents)
}

pub fn random_admissible(seed: u64, n: usize, speed_max: f64) -> Result<Ensemble> {
    if n == 0 || !(speed_max >= 0.0) {
        return Err(FlockError::config(
            "random data need n >= 1 and speed_max >= 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(n);
    while agents.len() < n {
        let x = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ) * speed_max;
        if x.norm() < 1e-3 {
            continue;
        }
        agents.push(admissibilize(x, v)?);
    }
    Ensemble::new(agents)
}

pub fn clustered(seed: u64, n: usize, cap_radius: f64, speed_max: f64) -> Result<Ensemble> {
    if n == 0 || !(cap_radius > 0.0 && cap_radius <= PI) || !(speed_max >= 0.0) {
        return Err(FlockError::config(
            "clustered data need n >= 1, cap_radius in (0, pi] and speed_max >= 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = loop {
        let c = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let len = c.norm();
        if len > 1e-3 && len <= 1.0 {
            break c / len;
        }
    };
    // Orthonormal frame (e1, e2) of the tangent plane at the center.
    let helper = if center[0].abs() < 0.9 {
        Vec3::E1
    } else {
        Vec3::E2
    };
    let e1 = normalize(helper - center * center.dot(helper))?;
    let e2 = center.cross(e1);
    let cos_cap = cap_radius.cos();
    let agents = (0..n)
        .map(|_| {
            // Uniform on the cap: cos of the polar angle uniform on [cos r, 1].
            let z: f64 = rng.random_range(cos_cap..=1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let x = center * z + (e1 * phi.cos() + e2 * phi.sin()) * r;
            let speed = speed_max * rng.random_range(0.0..=1.0);
            let dir = rng.random_range(0.0..2.0 * PI);
            let x = normalize(x)?;
            let t1 = normalize(e1 - x * x.dot(e1)).unwrap_or(e2);
            let t2 = x.cross(t1);
            admissibilize(x, (t1 * dir.cos() + t2 * dir.sin()) * speed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(agents)
}

/// A complete, rerunnable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    #[serde(flatten)]
    pub model: Model,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub initial: InitialData,
    #[serde(default)]
    pub minimize: MinimizeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        name: impl Into<String>,
        model: Model,
        integrator: IntegratorConfig,
        initial: InitialData,
    ) -> Self {
        RunConfig {
            name: name.into(),
            model,
            integrator,
            initial,
            minimize: MinimizeConfig::default(),
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.integrator.validate()?;
        self.minimize.validate()
    }

    /// Builds the initial ensemble; also checks model/size compatibility.
    pub fn initial_ensemble(&self) -> Result<Ensemble> {
        let ens = self.initial.build(&self.model)?;
        if ens.len() < 2 {
            return Err(FlockError::config(format!(
                "a run needs at least two agents, got {}",
                ens.len()
            )));
        }
        if let Model::TwoAgent { .. } = self.model {
            if ens.len() != 2 {
                return Err(FlockError::config(format!(
                    "the two-agent model needs exactly 2 agents, got {}",
                    ens.len()
                )));
            }
        }
        Ok(ens)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Current value of the scalar at a dot-separated path in the JSON form of
    /// the config, e.g. `sigma.sigma_r` or `integrator.dt`.
    pub fn param(&self, path: &str) -> Result<f64> {
        let mut doc = serde_json::to_value(self)?;
        lookup(&mut doc, path)?
            .as_f64()
            .ok_or_else(|| FlockError::config(format!("`{path}` does not address a numeric field")))
    }

    /// Copy of the config with the scalar at `path` replaced by `value`.
    pub fn with_param(&self, path: &str, value: f64) -> Result<RunConfig> {
        let mut doc = serde_json::to_value(self)?;
        let slot = lookup(&mut doc, path)?;
        let replacement = match slot {
            serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(FlockError::config(format!(
                        "`{path}` is an integer field, got {value}"
                    )));
                }
                serde_json::Value::from(value as u64)
            }
            serde_json::Value::Number(_) => serde_json::Number::from_f64(value)
                .map(serde_json::Value::Number)
                .ok_or_else(|| FlockError::config(format!("non-finite value for `{path}`")))?,
            _ => {
                return Err(FlockError::config(format!(
                    "`{path}` does not address a numeric field"
                )))
            }
        };
        *slot = replacement;
        let cfg: RunConfig = serde_json::from_value(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn lookup<'a>(doc: &'a mut serde_json::Value, path: &str) -> Result<&'a mut serde_json::Value> {
    let mut slot = doc;
    for key in path.split('.') {
        slot = slot
            .get_mut(key)
            .ok_or_else(|| FlockError::config(format!("no field `{key}` in path `{path}`")))?;
    }
    Ok(slot)
}

fn reference_initial() -> InitialData {
    InitialData::Named {
        name: "paper_n6".into(),
    }
}

fn main_model(sigma: SigmaKernel) -> Model {
    Model::Main {
        psi: EXP_PSI,
        sigma,
    }
}

/// Names accepted by [`scenario`]; families take a `:value` suffix.
pub fn scenario_names() -> Vec<String> {
    let mut names: Vec<String> = ["fig1", "fig2", "fig9", "fig0_ls"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(FIG3_SIGMA_R.iter().map(|v| format!("fig3_family:{v}")));
    names.extend(FIG7_BETA.iter().map(|v| format!("fig7_family:{v}")));
    names.push("two_agent_eq:<theta>".into());
    names
}

/// Members of a scenario family, in registry order.
pub fn family(name: &str) -> Result<Vec<RunConfig>> {
    let values: &[f64] = match name {
        "fig3_family" => &FIG3_SIGMA_R,
        "fig7_family" => &FIG7_BETA,
        other => return Err(FlockError::UnknownScenario(other.into())),
    };
    values
        .iter()
        .map(|v| scenario(&format!("{name}:{v}")))
        .collect()
}

pub fn scenario(name: &str) -> Result<RunConfig> {
    let unknown = || FlockError::UnknownScenario(name.into());
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a.parse::<f64>().map_err(|_| unknown())?)),
        None => (name, None),
    };
    let cfg = match (base, arg) {
        ("fig1", None) => RunConfig::new(
            name,
            Model::Main {
                psi: PsiKernel::Constant { value: 1.0 },
                sigma: SigmaKernel::new(0.0, 0.0),
            },
            IntegratorConfig::new(1e-3, 50.0),
            reference_initial(),
        ),
        ("fig2", None) => RunConfig::new(
            name,
            main_model(SigmaKernel::new(1.0, 0.5)),
            IntegratorConfig::new(1e-3, 100.0),
            reference_initial(),
        ),
        ("fig3_family", Some(sr)) if FIG3_SIGMA_R.contains(&sr) => RunConfig::new(
            name,
            main_model(SigmaKernel::new(1.0, sr)),
            IntegratorConfig::new(1e-3, 400.0),
            reference_initial(),
        ),
        ("fig7_family", Some(beta)) if FIG7_BETA.contains(&beta) => RunConfig::new(
            name,
            main_model(SigmaKernel::with_beta(5.0, 0.5, beta)),
            IntegratorConfig::new(1e-3, 50.0),
            reference_initial(),
        ),
        ("fig9", None) => RunConfig::new(
            name,
            Model::Boosted {
                psi: EXP_PSI,
                sigma: SigmaKernel::new(1.0, 0.5),
                boost: BoostParams { b: 0.2 },
            },
            IntegratorConfig::new(1e-3, 90.0),
            reference_initial(),
        ),
        ("fig0_ls", None) => RunConfig::new(
            name,
            Model::Ls {
                ls: LsParams {
                    k_v: 7.0,
                    k_a: 1.0,
                    k_r: 0.1,
                    k_0: 1e4,
                },
            },
            IntegratorConfig::new(1e-3, 200.0),
            reference_initial(),
        ),
        ("two_agent_eq", Some(theta)) => {
            let sigma = SigmaKernel::new(0.0, 1.0);
            let agents = two_agent_equilibrium_data(theta, sigma)?.to_vec();
            RunConfig::new(
                name,
                Model::TwoAgent {
                    sigma,
                    weights: TwoAgentWeights { n_total: 2, n: 1 },
                },
                IntegratorConfig::new(1e-3, 10.0).with_output_every(10),
                InitialData::Explicit { agents },
            )
        }
        _ => return Err(unknown()),
    };
    Ok(cfg)
}
