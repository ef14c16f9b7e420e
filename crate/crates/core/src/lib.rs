//! Deterministic volumetric augmentation engine and keypoint toolkit for
//! fetal pose estimation on EPI time series.
//!
//! - [`grid`]: volumes, masks, interpolation, blur and rigid warps
//! - [`heatmap`]: Gaussian heatmap synthesis and sub-voxel keypoint extraction
//! - [`augment`]: MRI artifact augmentations and the online pipeline
//! - [`inpaint`]: fetal inpainting bank construction and compositing
//! - [`phantom`]: synthetic uterus/fetus volumes with exact ground truth
//! - [`eval`]: PCK evaluation, keypoint groups and per-acquisition statistics
//! - [`io`]: NIfTI-1 subset and versioned JSON documents

pub mod augment;
pub mod error;
pub mod eval;
pub mod grid;
pub mod heatmap;
pub mod inpaint;
pub mod io;
pub mod phantom;
pub mod rng;

pub use error::{Error, Result};
pub use grid::{Interpolation, Mask, RigidTransform, Volume};
pub use heatmap::{HeatmapStack, Keypoint, KeypointSet, KEYPOINT_NAMES};
pub use augment::{apply_pipeline, AppliedOp, AugmentConfig, LabeledSample, Provenance, SampleMasks};
pub use eval::{pck, AcquisitionSeries, EvalReport, Group};
pub use inpaint::{Bank, InpaintParams, Placement};
pub use phantom::{make_phantom, PhantomSample, PhantomSpec};
pub use rng::{substream, Domain};
