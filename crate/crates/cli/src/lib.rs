//! Scenario runner behind the `dpn` binary.

pub mod inject;
pub mod presets;
pub mod run;
pub mod scenario;

pub use presets::{list_presets, preset, PRESETS};
pub use run::{execute, write_outputs, OutputFormat, Outcome};
pub use scenario::{Scenario, ScenarioKind};
