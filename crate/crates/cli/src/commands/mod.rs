pub mod geometry;
pub mod landscape;
pub mod solve;
pub mod sweep;
pub mod verify;
