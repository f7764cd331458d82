//! Compress fine-tuning deltas ("task vectors") into bit-packed task
//! switches, then merge them back into a base model statically or per input.
//!
//! ```
//! use tsw::{binarize, pulse, NamedTensorSet, Scope, Tensor};
//!
//! let mut tau = NamedTensorSet::new();
//! tau.insert("w", Tensor::vector(vec![0.4, -0.1, 0.25, -0.3, 0.05, -0.2]))
//!     .unwrap();
//! // Keep the large-magnitude half of each sign pool, binarize the rest.
//! let (pack, tau_hat) = binarize::bin_discard(&tau, 0.5, Scope::Global).unwrap();
//! assert_eq!(pack.total_active(), 4);
//! assert_eq!(tau_hat.get("w").unwrap().data()[1], 0.0);
//! let _ = pulse::p_discard(&tau, 0.5, Scope::Global).unwrap();
//! ```

pub mod binarize;
mod binio;
pub mod bitset;
pub mod cli;
pub mod error;
pub mod merge;
pub mod pulse;
pub mod router;
pub mod tensorstore;
pub mod toybench;

pub use binarize::{StorageReport, TaskSwitchPack};
pub use bitset::Bitset;
pub use error::{Error, Result};
pub use pulse::{PulseMask, Scope};
pub use router::{QueryIndex, RouteWeights};
pub use tensorstore::{Fingerprint, NamedTensorSet, Tensor};
