//! Proximal Langevin sampling (MYULA) for convex imaging models.
//!
//! A posterior `pi(x) ∝ exp(-f(x) - g(x))` with smooth `f` and non-smooth `g`
//! is sampled by an unadjusted Langevin chain on the Moreau-Yosida envelope
//! of `g`. The crate also carries the Px-MALA benchmark sampler, MCMC
//! diagnostics, HPD regions, marginal-likelihood estimation for model
//! comparison and explicit iteration budgets.

pub mod analytic1d;
pub mod bounds;
pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod image;
pub mod io;
pub mod prox;
pub mod samplers;
pub mod selection;
pub mod special;

pub use error::{Error, Result};
pub use forward::{CompositeModel, SmoothTerm};
pub use image::ImageField;
pub use prox::{NonSmoothTerm, ProxWorkspace};
pub use samplers::{run_myula, run_pxmala, ChainOutput, SamplerConfig};
