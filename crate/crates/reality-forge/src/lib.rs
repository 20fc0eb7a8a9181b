//! Emergent "IR spacetime" from clickstream logs, and classicality tests for
//! observed event frequencies.
//!
//! The library covers four loosely coupled areas:
//!
//! * the geometric pipeline: [`clicklog`] (parse / generate clickstreams),
//!   [`prespace`] (distances, transversal layers, discrete skeleton),
//!   [`embedding`] (project the skeleton into `R^{n+1}`), and [`geodesic`]
//!   (fit a metric field, integrate geodesics, predict the next click);
//! * probabilistic model testing: [`probcheck`] (Bell sum, Accardi–Fedullo
//!   condition, LP feasibility of a Kolmogorovian joint, the Accardi
//!   invariant) and [`melucci`] (a two-slit style Monte-Carlo source of
//!   relevance/term counts);
//! * [`automaton`]: Moore-machine state-identification experiments and the
//!   poset of experimentally accessible propositions;
//! * [`rota`]: template matrices of DAGs, algebra closure, signal
//!   propagation, and spatialization of matrix subspaces.
//!
//! Each area has a runnable example under `examples/`; the `reality-forge`
//! binary exposes the same operations as subcommands.

pub mod automaton;
pub mod clicklog;
pub mod cli;
pub mod embedding;
pub mod geodesic;
pub mod melucci;
pub mod pipeline;
pub mod prespace;
pub mod probcheck;
pub mod rota;
