//! Belief propagation, sampling, and gradient-based learning for restricted
//! Boltzmann machines (RBMs) and their conditional variants (CRBMs).
//!
//! The bipartite structure of these models lets the whole message-passing
//! state live in two dense matrices, so inference reduces to elementwise
//! kernels and row reductions that scale to very large layers. On top of
//! the inference core sit the training algorithms used for structured
//! prediction (maximum likelihood with BP, mean-field, or Gibbs negative
//! phases, and two max-margin objectives), plus dataset plumbing for image
//! denoising and completion experiments.
//!
//! Layout:
//!
//! - [`model`]: parameterizations, energies, exact conditionals, the
//!   conditioning map, enumeration oracles, and the binary model format.
//! - [`inference`]: matrix-form sum/mixed/max-product message passing, a
//!   scalar reference implementation, mean field, blocked Gibbs sampling,
//!   the three decoders, and the variational log-partition estimate.
//! - [`learning`]: gradient statistics, the training algorithms, the SGD
//!   driver with early stopping, and evaluation.
//! - [`data`]: IDX/raw image containers, binarization, corruption
//!   processes, splits, and error metrics.
//! - [`oracle`]: the self-check battery wired into the CLI.
//!
//! Everything is deterministic given a seed; parallel gradient workers
//! derive per-instance RNG streams so results do not depend on the worker
//! count.
//!
//! # Quick start
//!
//! ```
//! use crbm_bp::{BpOptions, RbmParams};
//! use crbm_bp::inference::bp_run;
//! use ndarray::{Array1, Array2};
//!
//! let model = RbmParams::new(
//!     Array2::from_elem((3, 2), 0.5),
//!     Array1::zeros(3),
//!     Array1::from_elem(2, -0.25),
//! )?;
//! let (beliefs, _messages, report) = bp_run(&model, &BpOptions::sum(50, 1e-6))?;
//! assert!(report.converged);
//! assert!(beliefs.visible.iter().all(|p| (0.0..=1.0).contains(p)));
//! # Ok::<(), crbm_bp::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod inference;
pub mod learning;
pub mod math;
pub mod model;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use inference::{Beliefs, BpMode, BpOptions, ConvergenceReport, Messages};
pub use model::{BinaryVector, CrbmParams, ExactSummary, FeatureVector, RbmParams};
