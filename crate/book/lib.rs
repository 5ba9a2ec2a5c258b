// mdbook cannot run listings that depend on a local crate, so every chapter
// is included as the docs of an empty module and checked by `cargo test --doc`.
// One module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/samples.md")]
pub mod samples {}
#[doc = include_str!("src/proper-losses.md")]
pub mod proper_losses {}
#[doc = include_str!("src/smooth-calibration.md")]
pub mod smooth_calibration {}
#[doc = include_str!("src/dual-metrics.md")]
pub mod dual_metrics {}
#[doc = include_str!("src/chain-problems.md")]
pub mod chain_problems {}
#[doc = include_str!("src/tight-examples.md")]
pub mod tight_examples {}
#[doc = include_str!("src/model-selection.md")]
pub mod model_selection {}
#[doc = include_str!("src/command-line.md")]
pub mod command_line {}
