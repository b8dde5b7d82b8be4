//! Runs every fenced Rust block in the book as a doc-test, so the
//! guide can never drift out of sync with the library. Each chapter is
//! included as the documentation of an empty module; `cargo test --doc
//! -p cohhn-book` compiles and runs the examples.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/data-pipeline.md")]
pub mod data_pipeline {}

#[doc = include_str!("../../../book/src/price-levels.md")]
pub mod price_levels {}

#[doc = include_str!("../../../book/src/hypergraph.md")]
pub mod hypergraph {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
