//! Sketch synthesis from CAD meshes, sketch similarity metrics and a
//! HOG-based sketch-to-model retrieval engine.
//!
//! The pipeline: parse and normalize a mesh ([`mesh_io`]), render it from the
//! 20 dodecahedron viewpoints ([`view_render`]), turn the representative view
//! into a sketch ([`sketch_gen`]), describe views and sketches with HOG
//! ([`hog_features`]) and rank models for a query sketch
//! ([`retrieval_engine`]). [`dataset_pipeline`] runs the whole thing over a
//! corpus.

pub mod dataset_pipeline;
pub mod feature_store;
pub mod hog_features;
pub mod image;
pub mod mesh_io;
pub mod quality_metrics;
pub mod retrieval_engine;
pub mod sketch_gen;
pub mod synthetic;
pub mod view_render;

pub use crate::image::GrayImage;
