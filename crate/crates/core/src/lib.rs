//! Many-server queues with scaled admission control in the Halfin–Whitt
//! (QED) regime: exact performance measures, corrected asymptotic
//! expansions, the limiting diffusion, Monte Carlo validation and
//! square-root staffing.

pub mod asymptotics;
pub mod control;
pub mod diffusion;
pub mod dimension;
pub mod emsum;
pub mod erlang_a;
pub mod error;
pub mod exact;
pub mod quad;
pub mod sim;
pub mod specfun;

pub use control::{ControlPolicy, Family, Mode, SystemParams};
pub use error::{Error, Result};
