//! Dataset ingestion, walk-forward evaluation and scenario reports.

pub mod recording;
pub mod scenario;
pub mod swtt;
pub mod synth;

pub use recording::{load_recording, write_recording, Recording};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioReport, Scheme};
pub use swtt::{swtt_evaluate, SwttConfig, SwttResult};
