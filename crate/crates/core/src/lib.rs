//! Age-of-information optimal scheduling for a wirelessly powered sensor.
//!
//! The pipeline is [`params`] → [`channel`] → [`mdp`] → [`solver`], with
//! [`structure`] checking the solved policy, [`simulator`] playing policies
//! forward and [`artifact`] persisting results. The guide in `book/` walks
//! through each step; its code blocks run as doc-tests.
//!
//! ```
//! use wpcn_aoi::mdp::TransitionModel;
//! use wpcn_aoi::params::SystemParams;
//! use wpcn_aoi::solver::{structured_value_iteration, SolverConfig};
//!
//! let mut p = SystemParams::reference(3);
//! p.battery_levels = 6;
//! p.channel_levels = 4;
//! let model = TransitionModel::new(p).unwrap();
//! let sol = structured_value_iteration(&model, &SolverConfig::default()).unwrap();
//! println!("average AoI {:.3} after {} sweeps", sol.values.rho, sol.values.iterations);
//! ```

pub mod artifact;
pub mod channel;
pub mod error;
pub mod mdp;
pub mod params;
pub mod simulator;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
