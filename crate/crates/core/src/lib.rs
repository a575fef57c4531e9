//! Monte-Carlo simulation of a three-level photon-echo memory with
//! dynamically decoupled spin storage.

pub mod engine;
pub mod ensemble;
pub mod harness;
pub mod model;
pub mod observables;
pub mod sequence;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/levels-and-pulses.md")]
    mod levels_and_pulses {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/bath.md")]
    mod bath {}
    #[doc = include_str!("../../../book/src/observables.md")]
    mod observables {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
