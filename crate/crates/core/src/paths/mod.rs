//! Path simulation: Euler–Maruyama with boundary stopping, Feynman–Kac
//! weights, the slowed-down process and its time change.

mod cutoff;
mod engine;
mod probe;
mod record;

pub use cutoff::{
    make_slowed_spec, time_change, time_change_bridged, time_change_with, CutoffSpec, Region,
    TimeChanged,
};
pub use engine::{simulate_path, PathConfig, PathSample, Simulator, StepView, StopCause};
pub use probe::{x_regularity_probe, RegularityProbe};
pub use record::{gamma_multiplicativity_check, Multiplicativity, Trajectory};
