// mdbook cannot test listings that depend on a workspace crate, so every
// chapter is pulled in here as a module doc and `cargo test --doc` runs them.
// One module per chapter keeps failure locations readable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/frequency.md")]
pub mod frequency {}
#[doc = include_str!("../../../book/src/design.md")]
pub mod design {}
#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
