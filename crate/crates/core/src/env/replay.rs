//! Episode replay export: a line-JSON stream with a versioned header line,
//! then one record per control step carrying every car's pose, the ego
//! controls, and the reward breakdown.

use crate::reward::RewardBreakdown;
use crate::vehicle::{Action, VehicleState};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

pub const REPLAY_FORMAT: &str = "race-replay";
pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed replay line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("not a replay stream (bad header)")]
    BadHeader,
    #[error("unsupported replay version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub format: String,
    pub version: u32,
    pub track: String,
    pub n_cars: usize,
    pub laps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayStep {
    pub step: u64,
    pub poses: Vec<CarPose>,
    pub delta_steer_deg: f64,
    pub throttle_brake: f64,
    pub reward: RewardBreakdown,
    pub progress: f64,
}

pub struct ReplayWriter<W: Write> {
    out: W,
    step: u64,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: &ReplayHeader) -> Result<Self, ReplayError> {
        let mut h = header.clone();
        h.format = REPLAY_FORMAT.to_string();
        h.version = REPLAY_VERSION;
        serde_json::to_writer(&mut out, &h).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(ReplayWriter { out, step: 0 })
    }

    pub fn record(
        &mut self,
        states: &[&VehicleState],
        action: Action,
        reward: &RewardBreakdown,
        progress: f64,
    ) -> Result<(), ReplayError> {
        let rec = ReplayStep {
            step: self.step,
            poses: states
                .iter()
                .map(|s| CarPose {
                    x: s.position[0],
                    y: s.position[1],
                    heading: s.heading,
                    speed: s.speed(),
                })
                .collect(),
            delta_steer_deg: action.delta_steer_deg,
            throttle_brake: action.throttle_brake,
            reward: *reward,
            progress,
        };
        serde_json::to_writer(&mut self.out, &rec).map_err(io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.step += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), ReplayError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parse a full replay stream back into header + steps.
pub fn read_replay<R: BufRead>(r: R) -> Result<(ReplayHeader, Vec<ReplayStep>), ReplayError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(ReplayError::BadHeader)?;
    let header: ReplayHeader =
        serde_json::from_str(&first?).map_err(|_| ReplayError::BadHeader)?;
    if header.format != REPLAY_FORMAT {
        return Err(ReplayError::BadHeader);
    }
    if header.version != REPLAY_VERSION {
        return Err(ReplayError::Version(header.version));
    }
    let mut steps = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let step: ReplayStep = serde_json::from_str(&line).map_err(|e| ReplayError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        steps.push(step);
    }
    Ok((header, steps))
}
