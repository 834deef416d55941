//! Network revenue management simulator with grace-period fair admission.
//!
//! Policies decide through [`policy::Policy`]; the [`policy::Runner`]
//! enforces capacity. Grace-period variants live in [`grace`] and
//! [`adversarial`], posted-price variants in [`pricing`].

pub mod adversarial;
pub mod cli;
pub mod error;
pub mod grace;
pub mod linprog;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod pricing;

pub use error::{Error, Result};
