pub mod csi;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod simulator;
pub mod predict;
