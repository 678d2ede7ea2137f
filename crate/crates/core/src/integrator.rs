//! Fixed-step explicit integration with optional projection back onto T S².

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentRate, Ensemble, Model};
use crate::error::{FlockError, Result};
use crate::geometry::Vec3;

/// Any speed above this is treated as numerical divergence.
pub const SPEED_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Heun,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    None,
    Renormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_projection")]
    pub projection: Projection,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Rk4
}
fn default_projection() -> Projection {
    Projection::Renormalize
}
fn default_output_every() -> usize {
    100
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            t_final: 100.0,
            scheme: Scheme::Rk4,
            projection: Projection::Renormalize,
            output_every: 100,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            dt,
            t_final,
            ..Default::default()
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_output_every(mut self, output_every: usize) -> Self {
        self.output_every = output_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(FlockError::config(format!(
                "dt must lie in (0, 0.1], got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(FlockError::config(format!(
                "t_final must be finite and nonnegative, got {}",
                self.t_final
            )));
        }
        if self.output_every == 0 {
            return Err(FlockError::config("output_every must be at least 1"));
        }
        Ok(())
    }

    /// Step sizes covering `[0, t_final]`: whole steps of `dt`, then a
    /// shortened final step if `t_final` is not a multiple of `dt`.
    pub fn step_plan(&self) -> (usize, Option<f64>) {
        let ratio = self.t_final / self.dt;
        let whole = (ratio + 1e-9).floor() as usize;
        let rest = self.t_final - whole as f64 * self.dt;
        if rest > 1e-12 * self.dt.max(self.t_final) {
            (whole, Some(rest))
        } else {
            (whole, None)
        }
    }
}

fn combine(k: [&[AgentRate]; 4], w: [f64; 4]) -> Vec<AgentRate> {
    (0..k[0].len())
        .map(|i| {
            let mut dx = Vec3::ZERO;
            let mut dv = Vec3::ZERO;
            for s in 0..4 {
                if w[s] != 0.0 {
                    dx += k[s][i].dx * w[s];
                    dv += k[s][i].dv * w[s];
                }
            }
            AgentRate { dx, dv }
        })
        .collect()
}

/// Restores `|x_i| = 1` and then `⟨x_i, v_i⟩ = 0`.
pub fn project(ens: &mut Ensemble) {
    for a in ens.agents_mut() {
        let n = a.x.norm();
        if n > 0.0 {
            a.x = a.x / n;
        }
        a.v = a.v - a.x * a.v.dot(a.x);
    }
}

/// One explicit step of size `h` without projection or checks.
pub fn raw_step(ens: &Ensemble, model: &Model, scheme: Scheme, h: f64) -> Result<Ensemble> {
    let next = match scheme {
        Scheme::Euler => {
            let k1 = model.rhs(ens)?;
            ens.advanced(&k1, h)
        }
        Scheme::Heun => {
            let k1 = model.rhs(ens)?;
            let k2 = model.rhs(&ens.advanced(&k1, h))?;
            let inc = combine([&k1, &k2, &k2, &k2], [0.5, 0.5, 0.0, 0.0]);
            ens.advanced(&inc, h)
        }
        Scheme::Rk4 => {
            let k1 = model.rhs(ens)?;
            let k2 = model.rhs(&ens.advanced(&k1, 0.5 * h))?;
            let k3 = model.rhs(&ens.advanced(&k2, 0.5 * h))?;
            let k4 = model.rhs(&ens.advanced(&k3, h))?;
            let sixth = 1.0 / 6.0;
            let inc = combine(
                [&k1, &k2, &k3, &k4],
                [sixth, 2.0 * sixth, 2.0 * sixth, sixth],
            );
            ens.advanced(&inc, h)
        }
    };
    Ok(next)
}

/// One step of size `h` ending at time `t_end`, with projection and divergence checks.
pub fn step(
    ens: &Ensemble,
    model: &Model,
    cfg: &IntegratorConfig,
    h: f64,
    t_end: f64,
) -> Result<Ensemble> {
    let mut next = raw_step(ens, model, cfg.scheme, h)?;
    if cfg.projection == Projection::Renormalize {
        project(&mut next);
    }
    check_speeds(&next, t_end)?;
    Ok(next)
}

fn check_speeds(ens: &Ensemble, t: f64) -> Result<()> {
    for (agent, a) in ens.agents().iter().enumerate() {
        let speed = a.v.norm();
        if !(speed <= SPEED_CAP) || !a.x.is_finite() {
            return Err(FlockError::Blowup { agent, speed, t });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub ensemble: Ensemble,
}

/// Result of a run: the snapshots produced, plus the error that stopped it early, if any.
#[derive(Debug)]
pub struct SimOutcome {
    pub snapshots: Vec<Snapshot>,
    pub error: Option<FlockError>,
}

impl SimOutcome {
    pub fn into_result(self) -> Result<Vec<Snapshot>> {
        match self.error {
            None => Ok(self.snapshots),
            Some(e) => Err(e),
        }
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("outcome always holds the initial snapshot")
    }
}

/// Integrates from `t = 0` to `cfg.t_final`, recording the initial state, every
/// `output_every`-th step, and the final state.
pub fn simulate(ens0: &Ensemble, model: &Model, cfg: &IntegratorConfig) -> SimOutcome {
    let mut snapshots = vec![Snapshot {
        t: 0.0,
        ensemble: ens0.clone(),
    }];
    let (whole, rest) = cfg.step_plan();
    let mut state = ens0.clone();
    for k in 1..=whole {
        // The last whole step lands on t_final when no fractional step follows.
        let t = if k == whole && rest.is_none() {
            cfg.t_final
        } else {
            k as f64 * cfg.dt
        };
        match step(&state, model, cfg, cfg.dt, t) {
            Ok(next) => state = next,
            Err(e) => {
                return SimOutcome {
                    snapshots,
                    error: Some(e),
                }
            }
        }
        if k % cfg.output_every == 0 || (k == whole && rest.is_none()) {
            snapshots.push(Snapshot {
                t,
                ensemble: state.clone(),
            });
        }
    }
    if let Some(h) = rest {
        match step(&state, model, cfg, h, cfg.t_final) {
            Ok(next) => snapshots.push(Snapshot {
                t: cfg.t_final,
                ensemble: next,
            }),
            Err(e) => {
                return SimOutcome {
                    snapshots,
                    error: Some(e),
                }
            }
        }
    }
    SimOutcome {
        snapshots,
        error: None,
    }
}

/// Final state only; no intermediate snapshots are kept.
pub fn integrate_to_end(
    ens0: &Ensemble,
    model: &Model,
    cfg: &IntegratorConfig,
) -> Result<Ensemble> {
    let quiet = IntegratorConfig {
        output_every: usize::MAX,
        ..*cfg
    };
    let out = simulate(ens0, model, &quiet);
    let mut snaps = out.into_result()?;
    Ok(snaps.pop().expect("initial snapshot present").ensemble)
}
