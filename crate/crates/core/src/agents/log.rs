use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Direct,
    Model,
    Planning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: u64,
    pub phase: Phase,
    /// Cumulative real environment steps after this record.
    pub real_env_steps: u64,
    /// Cost in ms, present for real steps.
    pub reward: Option<f64>,
    pub loss: Option<f64>,
}

/// Everything that happened during training, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    /// Real steps taken: direct steps plus planning probes.
    pub real_env_steps: u64,
    /// Sum of the response times of all real steps, in microseconds.
    pub experience_us: u64,
    /// Value-function updates (Adam steps or tabular backups).
    pub policy_updates: u64,
    pub model_updates: u64,
    pub direct_steps: u64,
    pub probe_steps: u64,
    /// Model sessions skipped because the world buffer was still too small.
    pub skipped_model_sessions: u64,
    pub epochs: u64,
    /// Response time of each real step in microseconds.
    pub step_times: Vec<u64>,
}

impl TrainingLog {
    pub fn new() -> TrainingLog {
        TrainingLog::default()
    }

    pub(crate) fn real_step(&mut self, epoch: u64, phase: Phase, reward: f64, response_us: u64, loss: Option<f64>) {
        self.real_env_steps += 1;
        self.experience_us += response_us;
        self.step_times.push(response_us);
        match phase {
            Phase::Planning => self.probe_steps += 1,
            _ => self.direct_steps += 1,
        }
        self.records.push(LogRecord { epoch, phase, real_env_steps: self.real_env_steps, reward: Some(reward), loss });
    }

    pub(crate) fn update(&mut self, epoch: u64, phase: Phase, loss: Option<f64>) {
        match phase {
            Phase::Model => self.model_updates += 1,
            _ => self.policy_updates += 1,
        }
        self.records.push(LogRecord { epoch, phase, real_env_steps: self.real_env_steps, reward: None, loss });
    }

    /// Real-step records only.
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.reward)
    }

    /// Writes `step,epoch,phase,reward,real_env_steps,loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AgentError> {
        let io = |e: csv::Error| AgentError::Config(format!("log output: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "epoch", "phase", "reward", "real_env_steps", "loss"]).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, r) in self.records.iter().enumerate() {
            let phase = match r.phase {
                Phase::Direct => "direct",
                Phase::Model => "model",
                Phase::Planning => "planning",
            };
            w.write_record([
                i.to_string(),
                r.epoch.to_string(),
                phase.to_string(),
                opt(r.reward),
                r.real_env_steps.to_string(),
                opt(r.loss),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| AgentError::Config(format!("log output: {e}")))
    }
}
