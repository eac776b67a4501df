//! Compiles the book's code blocks as doc-tests.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/free-convolution.md")]
pub mod free_convolution {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/gaps.md")]
pub mod gaps {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
