//! Dirichlet-process mixtures of multinomial logit models estimated by EM,
//! with latent-class and plain MNL baselines, a simulation generator and
//! evaluation utilities.

pub mod data;
pub mod dpm;
pub mod error;
pub mod evaluate;
pub mod lc;
pub mod mixture;
pub mod mnl;
pub mod optim;
pub mod simgen;
pub mod stick;

pub use data::{AttributeSpec, Dataset};
pub use dpm::{DpmConfig, DpmModel};
pub use error::{Error, Result};
pub use lc::{LcConfig, LcModel};
pub use mnl::{ParamVector, UtilitySpace, UtilitySpec};
