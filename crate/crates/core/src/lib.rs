//! Per-clip tuning of an encoder's Lagrangian multipliers: BD-rate between
//! RD curves, bounded derivative-free search over the multipliers, encoder
//! backends with a content-addressed cache, and a resumable campaign
//! pipeline with deterministic reports.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod bdrate;
pub mod corpus;
pub mod encoders;
pub mod events;
pub mod multipliers;
pub mod optim;
pub mod orchestrator;
pub mod rdmodel;
pub mod reporting;
pub mod resample;
pub mod selftest;
pub mod y4m;

// One module per chapter so a failing listing points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bd-rate.md")]
    mod bd_rate {}
    #[doc = include_str!("../../../book/src/multipliers.md")]
    mod multipliers {}
    #[doc = include_str!("../../../book/src/optimizers.md")]
    mod optimizers {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
}
