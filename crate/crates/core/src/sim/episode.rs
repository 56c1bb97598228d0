use serde::{Deserialize, Serialize};

use super::{
    check_gate_event, expert_command, render_observation, step_dynamics, DroneState,
    DynamicsConfig, Gate, GateEvent, Track,
};
use crate::error::Result;
use crate::perception::Observation;
use crate::policy::VelocityCommand;
use crate::rng::{self, tags, Rng};
use crate::uq::PredictiveResult;

/// Everything a pilot may look at in one control step. Learned pilots only use
/// the observation; the expert uses ground truth.
pub struct PilotInput<'a> {
    pub state: &'a DroneState,
    pub observation: &'a Observation,
    pub next_gate: &'a Gate,
}

#[derive(Debug, Clone)]
pub struct PilotOutput {
    pub command: VelocityCommand,
    pub prediction: Option<PredictiveResult>,
}

pub trait Pilot: Sync {
    fn act(&self, input: &PilotInput<'_>, rng: &mut Rng) -> Result<PilotOutput>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertPilot;

impl Pilot for ExpertPilot {
    fn act(&self, input: &PilotInput<'_>, _rng: &mut Rng) -> Result<PilotOutput> {
        Ok(PilotOutput {
            command: expert_command(input.state, input.next_gate),
            prediction: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub dynamics: DynamicsConfig,
    pub pixel_noise_std: f64,
    /// Time allowed to reach the next gate, s.
    pub gate_time_budget: f64,
    pub max_gates: usize,
    /// Start distance behind gate 0 on its axis, m.
    pub start_offset: f64,
    pub max_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            pixel_noise_std: 0.05,
            gate_time_budget: 15.0,
            max_gates: 32,
            start_offset: 2.0,
            max_steps: 12_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    MissedGate,
    TimeoutGate,
    MaxSteps,
    /// The pilot or the dynamics produced a non-finite value.
    Aborted,
}

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub state: DroneState,
    pub command: VelocityCommand,
    pub prediction: Option<PredictiveResult>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub gates_traversed: usize,
    pub termination: Termination,
    pub error: Option<String>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl EpisodeResult {
    pub fn aborted(&self) -> bool {
        self.termination == Termination::Aborted
    }
}

pub fn start_state(track: &Track, config: &EpisodeConfig) -> DroneState {
    let g0 = &track.gates[0];
    let mut p = g0.center - g0.normal() * config.start_offset;
    p.z = track.config.base_height;
    DroneState::at_rest(p, g0.yaw)
}

/// Closed-loop run: render, act, clamp, integrate, check the next gate.
///
/// Per-step random streams are keyed by `(episode_key, purpose, step)`, so an
/// episode is reproducible regardless of what else runs concurrently.
pub fn run_episode<P: Pilot + ?Sized>(
    pilot: &P,
    track: &Track,
    config: &EpisodeConfig,
    episode_key: u64,
) -> EpisodeResult {
    let mut state = start_state(track, config);
    let mut passed = 0usize;
    let mut gate_clock = 0.0;
    let mut trajectory = Vec::new();
    let finish = |passed, termination, error, trajectory| EpisodeResult {
        gates_traversed: passed,
        termination,
        error,
        trajectory,
    };

    for step in 0..config.max_steps as u64 {
        let gate = track.gate(passed);
        let mut render_rng = rng::stream(episode_key, &[tags::RENDER, step]);
        let obs = render_observation(&state, gate, config.pixel_noise_std, &mut render_rng);
        let mut policy_rng = rng::stream(episode_key, &[tags::POLICY, step]);
        let input = PilotInput {
            state: &state,
            observation: &obs,
            next_gate: gate,
        };
        let out = match pilot.act(&input, &mut policy_rng) {
            Ok(out) if out.command.is_finite() => out,
            Ok(_) => {
                let msg = "pilot produced a non-finite command".to_string();
                return finish(passed, Termination::Aborted, Some(msg), trajectory);
            }
            Err(e) => return finish(passed, Termination::Aborted, Some(e.to_string()), trajectory),
        };
        let command = out.command.clamped();
        let next = match step_dynamics(&state, &command, &config.dynamics) {
            Ok(n) => n,
            Err(e) => return finish(passed, Termination::Aborted, Some(e.to_string()), trajectory),
        };
        trajectory.push(TrajectoryPoint {
            time: state.time,
            state,
            command,
            prediction: out.prediction,
        });
        let event = check_gate_event(&state, &next, gate);
        state = next;
        match event {
            GateEvent::Traversed => {
                passed += 1;
                gate_clock = state.time;
                if passed >= config.max_gates {
                    return finish(passed, Termination::Completed, None, trajectory);
                }
            }
            GateEvent::Missed => return finish(passed, Termination::MissedGate, None, trajectory),
            GateEvent::None => {}
        }
        if state.time - gate_clock > config.gate_time_budget {
            return finish(passed, Termination::TimeoutGate, None, trajectory);
        }
    }
    finish(passed, Termination::MaxSteps, None, trajectory)
}

/// Writes `time,x,y,z,yaw,cmd_vx,cmd_vy,cmd_vz,cmd_yaw_rate,std_vx,std_vy,std_vz,std_yaw_rate`.
pub fn write_trajectory_csv(result: &EpisodeResult, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "time", "x", "y", "z", "yaw", "cmd_vx", "cmd_vy", "cmd_vz", "cmd_yaw_rate", "std_vx",
        "std_vy", "std_vz", "std_yaw_rate",
    ])?;
    for p in &result.trajectory {
        let std = p
            .prediction
            .as_ref()
            .map(|r| r.std_physical())
            .unwrap_or([f64::NAN; 4]);
        let row = [
            p.time,
            p.state.position.x,
            p.state.position.y,
            p.state.position.z,
            p.state.yaw,
            p.command.vx,
            p.command.vy,
            p.command.vz,
            p.command.yaw_rate,
            std[0],
            std[1],
            std[2],
            std[3],
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(crate::error::Error::io(path))?;
    Ok(())
}
