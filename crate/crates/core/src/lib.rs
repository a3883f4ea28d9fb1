//! Removal of multiplicative Gamma noise by total-variation regularization.
//!
//! The observation model is `f = u * eta` with `eta ~ Gamma(M, 1/M)`. Images
//! are restored in the log domain by a linearized alternating-direction
//! iteration; the weight between data term and TV is either fixed, chosen
//! globally, or chosen per pixel so that the residual statistic
//! `mean(f/u - log(f/u))` matches its expected value under the noise.
//!
//! ```no_run
//! use despeckle::{noise, pgm, solver, fidelity};
//!
//! let clean = pgm::read_pgm("cameraman.pgm")?;
//! let f = noise::apply_multiplicative_noise(&clean, noise::GammaNoiseSpec::new(8.0, 1)?)?;
//! let model = fidelity::FidelityModel::new(fidelity::FidelityKind::Exponential, f)?;
//! let out = solver::run(&model, &solver::SolverConfig::dp_ladm(8.0), Some(&clean))?;
//! println!("{}", noise::psnr(&out.image, &clean)?);
//! # Ok::<(), despeckle::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod discrepancy;
mod error;
pub mod fidelity;
pub mod grid;
pub mod noise;
pub mod pgm;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GradientField, Image, PixelParam, Window};
