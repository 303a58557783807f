pub mod adapter;
pub mod apportion;
pub mod io;
pub mod metrics;
pub mod occlusion;
pub mod predictors;
pub mod projection;
pub mod qra;
pub mod scene;
pub mod scenegen;
