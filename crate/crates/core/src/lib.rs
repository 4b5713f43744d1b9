pub mod discretization;
pub mod error;
pub mod geometry;
pub mod lab;
pub mod linalg;
pub mod stability;
pub mod system;
