pub mod align;
pub mod datagen;
pub mod metrics;
pub mod sample;
pub mod train;
