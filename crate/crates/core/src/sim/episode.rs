use serde::{Deserialize, Serialize};

use super::{contact_force, Plan, Scenario, SimError};
use crate::control::{self, ControllerState, Gains, Integrator};
use crate::reference::{
    blend_chunks, ActionChunk, ChunkSource, ReferenceError, ReferenceMode, ReferenceSample,
    ReferenceSource, SplineSource,
};
use crate::spline::{fit_least_squares, TrajectorySamples, CUBIC};
use crate::Vector;

/// How each new chunk is aligned with the ground-truth plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchoring {
    /// Chunks follow the wall clock: the chunk emitted at `t` covers `plan(t + ...)`.
    OpenLoop,
    /// Chunks start from the plan phase nearest the measured position, the
    /// way a policy conditioned on observations resumes from where the robot is.
    #[default]
    ClosedLoop,
}

/// Synthetic stand-in for the action-chunking policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Representation the demonstrations were converted to. A position-only
    /// policy learns to lead the plan by the controller's lag `D/K`; velocity
    /// aware representations need no lead. Defaults to the rollout mode.
    pub trained_with: Option<ReferenceMode>,
    pub anchoring: Anchoring,
    /// Targets per chunk.
    pub horizon: usize,
    /// Actions executed before the next chunk is requested.
    pub replan_every: usize,
    /// Crossfade length between consecutive chunks (s).
    pub blend_overlap: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            trained_with: None,
            anchoring: Anchoring::ClosedLoop,
            horizon: 16,
            replan_every: 8,
            blend_overlap: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub mode: ReferenceMode,
    pub f_ctrl: f64,
    pub f_action: f64,
    pub gains: Gains,
    pub duration_max: f64,
    pub seed: u64,
    pub integrator: Integrator,
    /// Time constant of a first-order inner position loop (s); ideal if absent.
    pub inner_loop_lag: Option<f64>,
    pub stop_on_success: bool,
    pub policy: PolicyConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            mode: ReferenceMode::FiniteDifference,
            f_ctrl: 500.0,
            f_action: 15.0,
            gains: Gains::default_for(2),
            duration_max: 20.0,
            seed: 0,
            integrator: Integrator::SemiImplicitEuler,
            inner_loop_lag: None,
            stop_on_success: true,
            policy: PolicyConfig::default(),
        }
    }
}

impl EpisodeConfig {
    fn check_rates(&self) -> Result<(), SimError> {
        if !(self.f_action > 0.0) || !(self.f_ctrl >= self.f_action) || !self.f_ctrl.is_finite() {
            return Err(SimError::Config(format!(
                "need 0 < f_action <= f_ctrl, got f_action = {} and f_ctrl = {}",
                self.f_action, self.f_ctrl
            )));
        }
        Ok(())
    }

    pub fn validate(&self, dims: usize) -> Result<(), SimError> {
        self.check_rates()?;
        let dt = 1.0 / self.f_ctrl;
        if !(dt <= 0.01) {
            return Err(SimError::Config(format!("f_ctrl = {} Hz is below 100 Hz", self.f_ctrl)));
        }
        if self.gains.dims() != dims {
            return Err(SimError::Config(format!(
                "gains have {} axes, plan has {dims}",
                self.gains.dims()
            )));
        }
        if !(self.duration_max > 0.0) || !self.duration_max.is_finite() {
            return Err(SimError::Config("duration_max must be positive".into()));
        }
        if let Some(tau) = self.inner_loop_lag {
            if !(tau > 0.0) {
                return Err(SimError::Config("inner_loop_lag must be positive".into()));
            }
        }
        let p = &self.policy;
        if p.horizon < 2 {
            return Err(SimError::Config("policy horizon must be at least 2".into()));
        }
        if p.replan_every == 0 || p.replan_every >= p.horizon {
            return Err(SimError::Config(format!(
                "replan_every must lie in 1..{}, got {}",
                p.horizon, p.replan_every
            )));
        }
        if !(p.blend_overlap >= 0.0) {
            return Err(SimError::Config("blend_overlap must be non-negative".into()));
        }
        Ok(())
    }

    fn trained_with(&self) -> ReferenceMode {
        self.policy.trained_with.unwrap_or(self.mode)
    }
}

/// Everything recorded at each control tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub times: Vec<f64>,
    pub x_d: Vec<Vector>,
    pub xd_dot: Vec<Vector>,
    pub xd_ddot: Vec<Vector>,
    pub x: Vec<Vector>,
    pub v: Vec<Vector>,
    pub a_cmd: Vec<Vector>,
    pub f_ext: Vec<Vector>,
    pub e: Vec<Vector>,
    /// Ground-truth plan position at the same instant.
    pub plan_position: Vec<Vector>,
    pub success_time: Option<f64>,
    pub duration_max: f64,
    /// Spline queries answered by the terminal-hold policy.
    pub clamp_events: usize,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x.first().map_or(0, |x| x.len())
    }

    pub fn success(&self) -> bool {
        self.success_time.is_some()
    }

    /// Largest contact force magnitude over the episode.
    pub fn peak_force(&self) -> f64 {
        self.f_ext.iter().map(|f| f.norm()).fold(0.0, f64::max)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, t: f64, r: &ReferenceSample, x: &Vector, v: &Vector, a: Vector, f: Vector, plan: Vector) {
        self.times.push(t);
        self.e.push(&r.position - x);
        self.x_d.push(r.position.clone());
        self.xd_dot.push(r.velocity.clone());
        self.xd_ddot.push(r.acceleration.clone());
        self.x.push(x.clone());
        self.v.push(v.clone());
        self.a_cmd.push(a);
        self.f_ext.push(f);
        self.plan_position.push(plan);
    }
}

enum Source {
    Chunk(ChunkSource),
    Spline(SplineSource),
}

impl Source {
    fn sample(&self, t: f64) -> Result<ReferenceSample, ReferenceError> {
        match self {
            Source::Chunk(c) => c.sample(t),
            Source::Spline(s) => s.sample(t),
        }
    }

    fn as_dyn(&self) -> &dyn ReferenceSource {
        match self {
            Source::Chunk(c) => c,
            Source::Spline(s) => s,
        }
    }

    fn clamp_count(&self) -> usize {
        match self {
            Source::Chunk(_) => 0,
            Source::Spline(s) => s.clamp_count(),
        }
    }
}

/// Plan phase nearest to `x` within `[lo, hi]`; ties resolve to the earliest.
fn anchor_phase(plan: &Plan, x: &Vector, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return lo;
    }
    const GRID: usize = 64;
    let dist = |s: f64| (plan.position(s) - x).norm();
    let step = (hi - lo) / GRID as f64;
    let (mut best_i, mut best_d) = (0, dist(lo));
    for i in 1..=GRID {
        let d = dist(lo + step * i as f64);
        if d < best_d {
            best_i = i;
            best_d = d;
        }
    }
    let best = lo + step * best_i as f64;
    let mut a = (best - step).max(lo);
    let mut b = (best + step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if dist(c) <= dist(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    if dist(refined) < best_d {
        refined
    } else {
        best
    }
}

struct ChunkBuilder<'a> {
    plan: &'a Plan,
    mode: ReferenceMode,
    horizon: usize,
    dt_action: f64,
    lead: Vec<f64>,
}

impl ChunkBuilder<'_> {
    fn build(&self, start_time: f64, phase: f64) -> Result<Source, SimError> {
        let h = self.horizon;
        match self.mode {
            ReferenceMode::Spline => {
                let span = (h - 1) as f64 * self.dt_action;
                let m = 4 * h;
                let times: Vec<f64> = (0..m)
                    .map(|i| start_time + span * i as f64 / (m - 1) as f64)
                    .collect();
                let rows: Vec<Vector> = times
                    .iter()
                    .map(|&t| self.plan.position_shifted(phase + (t - start_time), &self.lead))
                    .collect();
                let samples = TrajectorySamples::from_rows(times, &rows)
                    .map_err(|source| SimError::Fit { time: start_time, source })?;
                let fit = fit_least_squares(&samples, h, CUBIC)
                    .map_err(|source| SimError::Fit { time: start_time, source })?;
                Ok(Source::Spline(SplineSource::new(fit.trajectory)))
            }
            mode => {
                let targets = (0..h)
                    .map(|j| self.plan.position_shifted(phase + j as f64 * self.dt_action, &self.lead))
                    .collect();
                let chunk = ActionChunk::new(start_time, self.dt_action, targets)?;
                Ok(Source::Chunk(ChunkSource { chunk, mode }))
            }
        }
    }
}

fn non_finite(step: usize, time: f64) -> SimError {
    SimError::NonFinite { step, time }
}

/// Runs one episode: chunks are requested every `replan_every` action ticks,
/// the reference is queried and the controller stepped at `f_ctrl`.
///
/// Action ticks fall at exact multiples of `1 / f_action`; a chunk is issued
/// on the first control tick at or after its action tick and starts at that
/// action tick.
pub fn run_episode(plan: &Plan, cfg: &EpisodeConfig, scenario: &Scenario) -> Result<EpisodeTrace, SimError> {
    let dims = plan.dims();
    cfg.validate(dims)?;
    scenario.validate(dims)?;

    let dt = 1.0 / cfg.f_ctrl;
    let dt_action = 1.0 / cfg.f_action;
    let p = &cfg.policy;
    let replan_period = p.replan_every as f64 * dt_action;
    let mut replans = 0usize;
    let overlap = p
        .blend_overlap
        .min((p.horizon - 1 - p.replan_every) as f64 * dt_action)
        .max(0.0);
    let lead: Vec<f64> = if cfg.trained_with() == ReferenceMode::PositionOnly {
        control::steady_state_lag(&cfg.gains, &Vector::from_element(dims, 1.0), false)?
            .iter()
            .copied()
            .collect()
    } else {
        vec![0.0; dims]
    };
    let max_lead = lead.iter().copied().fold(0.0, f64::max);
    let builder = ChunkBuilder {
        plan,
        mode: cfg.mode,
        horizon: p.horizon,
        dt_action,
        lead,
    };

    let n_steps = (cfg.duration_max * cfg.f_ctrl + 1e-9).floor() as usize;
    let goal = plan.end_position();
    let mut state = ControllerState::at_rest(plan.start_position());
    let mut plant = state.clone();
    let inner_alpha = cfg.inner_loop_lag.map(|tau| 1.0 - (-dt / tau).exp());

    let mut trace = EpisodeTrace {
        duration_max: cfg.duration_max,
        ..Default::default()
    };
    let mut phase = 0.0;
    let mut current: Option<Source> = None;
    let mut previous: Option<Source> = None;
    let mut switch_time = 0.0;
    let mut clamp_events = 0;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let due = replans as f64 * replan_period;
        if t >= due - 1e-9 * dt_action {
            let start = due.min(t);
            replans += 1;
            phase = match p.anchoring {
                Anchoring::OpenLoop => start,
                Anchoring::ClosedLoop if k == 0 => 0.0,
                Anchoring::ClosedLoop => {
                    let hi = (phase + 2.0 * p.replan_every as f64 * dt_action + max_lead).min(plan.duration());
                    anchor_phase(plan, &plant.position, phase, hi)
                }
            };
            let next = builder.build(start, phase)?;
            if let Some(old) = previous.take() {
                clamp_events += old.clamp_count();
            }
            previous = current.replace(next);
            switch_time = start;
        }
        let source = current.as_ref().expect("chunk requested at k = 0");
        let reference = match &previous {
            Some(prev) => blend_chunks(prev.as_dyn(), source.as_dyn(), switch_time, overlap, t)?,
            None => source.sample(t)?,
        };
        if !reference.is_finite() {
            return Err(non_finite(k, t));
        }
        let force = contact_force(scenario, &plant.position, &plant.velocity);
        let accel = control::admittance_accel(&state, &reference, &force, &cfg.gains);
        trace.push(t, &reference, &plant.position, &plant.velocity, accel.clone(), force.clone(), plan.position(t));

        if trace.success_time.is_none() && scenario.is_success(&plant.position, &plant.velocity, &goal) {
            trace.success_time = Some(t);
            if cfg.stop_on_success {
                break;
            }
        }
        if k == n_steps {
            break;
        }

        state = match cfg.integrator {
            Integrator::SemiImplicitEuler => control::advance(&state, &accel, dt),
            Integrator::Rk4 => {
                let ideal = inner_alpha.is_none();
                control::step_rk4(&state, &reference, &cfg.gains, dt, |s| {
                    if ideal {
                        contact_force(scenario, &s.position, &s.velocity)
                    } else {
                        force.clone()
                    }
                })?
            }
        };
        plant = match inner_alpha {
            None => state.clone(),
            Some(alpha) => {
                let position = &plant.position + (&state.position - &plant.position) * alpha;
                let velocity = (&position - &plant.position) / dt;
                ControllerState { position, velocity }
            }
        };
        if !state.is_finite() || !plant.is_finite() {
            return Err(non_finite(k + 1, t + dt));
        }
    }
    clamp_events += current.map_or(0, |s| s.clamp_count()) + previous.map_or(0, |s| s.clamp_count());
    trace.clamp_events = clamp_events;
    Ok(trace)
}
