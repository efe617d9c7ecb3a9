//! On-disk formats read and written by the command line.

pub mod camera;
pub mod config;
pub mod depth;
pub mod features;
pub mod image_io;
pub mod matches;
pub mod ply;
