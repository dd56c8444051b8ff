pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod model;
pub mod trainer;
pub mod verify;
