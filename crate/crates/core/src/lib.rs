pub mod autodiff;
pub mod dsl;
pub mod rng;
pub mod taskgen;
pub mod vocab;
pub mod model;
pub mod search;
pub mod train;
pub mod gradcheck;
pub mod analyze;
