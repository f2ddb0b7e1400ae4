pub mod compare;
pub mod evaluate;
pub mod search;
pub mod synth;
pub mod train;
