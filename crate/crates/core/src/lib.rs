//! Two-stage infobox-to-description generation with head-modifier templates.

pub mod annotator;
pub mod autograd;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod layers;
pub mod lexicon;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;
