//! Human-in-the-loop segmentation correction engine.
//!
//! Human edits are treated as interventions on a segmentation: a selected
//! region `R` is reassigned to a class `y*`, the edit is propagated to
//! visually similar regions across the training split, and a small
//! differentiable backbone is fine-tuned on the combined supervision.
//!
//! Modules follow the pipeline order:
//!
//! - [`mask`]: taxonomy, rasters, mask file formats, dataset manifest
//! - [`region`]: magic wand, selection refinement, CLAHE, morphology
//! - [`failure`]: entropy / disagreement / attribution maps, region flagging
//! - [`propagation`]: region descriptors, train-only index, propagation rule
//! - [`learn`]: toy backbone, composite loss, gradients, Adam, fine-tuning
//! - [`eval`]: metrics, session log accounting, synthetic bias bench
//! - [`store`], [`server`], [`cli`]: persistence, HTTP service, command line

pub mod cli;
pub mod eval;
pub mod failure;
pub mod learn;
pub mod mask;
pub mod propagation;
pub mod region;
pub mod server;
pub mod store;
