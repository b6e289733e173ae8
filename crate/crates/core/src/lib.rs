//! Risk sharing among agents that each measure risk against their own
//! acceptance set and their own space of eligible securities.
//!
//! Everything lives on a finite scenario space. The modules build on each
//! other roughly in declaration order:
//!
//! * [`scenario`]: probability spaces, random variables, linear functionals.
//! * [`linprog`]: a dense two-phase simplex with duals, plus null spaces.
//! * [`regime`]: acceptance sets, security markets and the induced risk measure.
//! * [`market`]: agent systems, the market risk measure and Pareto allocations.
//! * [`lawinv`]: law-invariant agents (entropic, average value at risk).
//! * [`equilibrium`]: subgradient prices and equilibria.
//! * [`splits`]: choosing how many parts to split a loss into.
//! * [`oracle`]: brute-force grid checks used by the test suites.

pub mod equilibrium;
pub mod error;
pub mod lawinv;
pub mod linprog;
pub mod market;
pub mod oracle;
pub mod regime;
pub mod report;
pub mod scenario;
pub mod splits;

pub use error::{Error, Result};
pub use scenario::{Extended, Functional, RandomVariable, ScenarioSpace, SupportMask};
