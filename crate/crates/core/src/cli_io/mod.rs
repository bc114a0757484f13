//! File formats, configuration and command implementations behind the
//! `tiara` binary.

pub mod commands;
pub mod config;
pub mod tensor_file;
pub mod text;

pub use config::Config;
pub use tensor_file::TensorFile;
