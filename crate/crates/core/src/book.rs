//! The guide in `book/src`, compiled so that its code blocks run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/circuits.md")]
mod circuits {}
#[doc = include_str!("../../../book/src/entropy.md")]
mod entropy {}
#[doc = include_str!("../../../book/src/gradients.md")]
mod gradients {}
#[doc = include_str!("../../../book/src/scaling.md")]
mod scaling {}
#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}
#[doc = include_str!("../../../book/src/config.md")]
mod config {}
#[doc = include_str!("../../../book/src/validation.md")]
mod validation {}
