pub mod cohort;
pub mod evaluate;
pub mod image;
pub mod phantom;
pub mod segment;
pub mod skeleton;
