//! The guide's chapters, compiled as documentation so that every snippet
//! runs as a doc-test against the current library.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/planes.md")]
pub mod planes {}

#[doc = include_str!("../../../book/src/varifolds.md")]
pub mod varifolds {}

#[doc = include_str!("../../../book/src/qvalued.md")]
pub mod qvalued {}

#[doc = include_str!("../../../book/src/excess.md")]
pub mod excess {}

#[doc = include_str!("../../../book/src/approximation.md")]
pub mod approximation {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
