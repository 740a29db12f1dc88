//! The narrative guide, one module per book chapter.
//!
//! The chapters live in `book/` as an mdbook; including them here as doc
//! comments makes every code block in the book a doctest of this crate, so
//! `cargo test --doc` keeps the book and the library in sync.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/thinning.md")]
pub mod thinning {}

#[doc = include_str!("../../../book/src/couplings.md")]
pub mod couplings {}

#[doc = include_str!("../../../book/src/percolation.md")]
pub mod percolation {}

#[doc = include_str!("../../../book/src/functionals.md")]
pub mod functionals {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
