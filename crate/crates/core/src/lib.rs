//! Galton-Watson real trees and their pruning processes.
//!
//! The crate is organised around a handful of value types:
//!
//! * [`Mechanism`] – a branching mechanism `ψ` with analytic helpers
//!   (derivatives, `η(h)`, largest roots, erased Lévy-forest laws).
//! * [`OffspringLaw`] – a finite-support offspring distribution and the
//!   generating-function transforms acting on it (erasure, pruning,
//!   size-biasing, ...).
//! * [`RealTree`] – a finite rooted tree with edge lengths and its geometric
//!   functionals.
//! * [`MarkSet`] – pruning marks attached to a tree.
//!
//! Random generation lives in [`sampler`], pruning in [`prune`], tree and
//! path comparisons in [`treemetric`] and the statistical harness in
//! [`verify`].
//!
//! Run `cargo run --release --example <name>` for a tour; see the crate's
//! `examples/` directory.

pub mod error;
pub mod mechanism;
pub mod numeric;
pub mod offspring;
pub mod prune;
pub mod realtree;
pub mod rng;
pub mod sampler;
pub mod treemetric;
pub mod verify;

pub use error::{Error, Result};
pub use mechanism::{LevyMeasure, Mechanism, PruneLawBundle, Stable};
pub use offspring::{OffspringLaw, PruneTimeFamily, TimeLaw};
pub use prune::{Mark, MarkKind, MarkSet, Regime};
pub use realtree::{EraseMode, Functionals, RealTree, TreeBuilder};
pub use rng::RngStream;
pub use sampler::Caps;
