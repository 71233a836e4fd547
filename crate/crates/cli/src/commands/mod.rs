pub mod eval;
pub mod forward;
pub mod label;
pub mod synth;
