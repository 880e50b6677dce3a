//! Workbench for synthesizing images that a trained digit classifier labels
//! with near-certainty even though they look nothing like digits.
//!
//! * [`dataset`]: IDX ingestion, images, mean image, the "+1" fooling class
//! * [`nnet`]: LeNet-style convnet with manual backprop and SGD training
//! * [`encodings`]: direct pixel genomes and CPPN genomes
//! * [`mapelites`]: per-class elite archive and the evolution driver
//! * [`gradascent`]: pixel-space gradient ascent with regularizers
//! * [`retrain`]: fold fooling images into an extra class and re-attack
//! * [`analysis`]: transfer, ablation, confidence statistics, reports

pub mod analysis;
pub mod dataset;
pub mod encodings;
pub mod error;
pub mod gradascent;
pub mod mapelites;
pub mod nnet;
pub mod par;
pub mod retrain;
pub mod seed;

pub use error::{Error, Result};
