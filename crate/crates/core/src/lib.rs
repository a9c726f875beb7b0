pub mod eval;
pub mod experiment;
pub mod forecast;
pub mod hls;
pub mod synth;
pub mod taxonomy;
pub mod trend;
pub mod tensor;
