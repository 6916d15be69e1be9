//! Multi-car racing environment: observation assembly (ego raster,
//! proprioceptive vector, global features), scripted opponents, lockstep
//! stepping, reward wiring, and replay export.

pub mod biai;
pub mod obs;
pub mod race;
pub mod render;
pub mod replay;

pub use biai::{biai_policy, sample_bop, BiaiParams};
pub use obs::{build_opponent_grid, build_proprio, OppRef, OPP_GRID_LEN, PROPRIO_LEN};
pub use race::{EnvError, Observation, RaceConfig, RaceEnv, StartMode, StepInfo};
pub use render::{image_to_f32, render_ego_view, IMG_C, IMG_H, IMG_W};
