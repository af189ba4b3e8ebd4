pub mod curve;
pub mod engine;
pub mod error;
pub mod exec;
pub mod fixed;
pub mod golden;
pub mod pack;
pub mod quant;
pub mod reference;
pub mod sim;
pub mod tensor;
