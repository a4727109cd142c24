//! Continuum-wise expansivity and entropy estimators for suspension flows.
//!
//! Module map:
//! - [`spaces`]: points, metrics and sampled arcs
//! - [`systems`]: base maps, unit-roof suspensions, the chain metric, a flow with fixed points
//! - [`sections`]: adequate cross-section pairs and first-return bookkeeping
//! - [`expansivity`]: searches and witnesses for continuum-wise expansivity
//! - [`entropy`]: counting estimators, growth fits and the separated witness tree
//! - [`cli`]: config grammar and subcommand dispatch for the `ergoflow` binary

pub mod cli;
pub mod entropy;
pub mod expansivity;
pub mod sections;
pub mod spaces;
pub mod systems;

pub use spaces::{Arc, Chart, IntervalPoint, Metric, Point, SpaceError, SymbolWord, TorusPoint};
pub use systems::{BaseMap, ChartChange, FlowHandle, SuspensionPoint, SystemError, SystemKind};
