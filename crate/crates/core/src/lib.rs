pub mod geometry;
pub mod dynamics;
pub mod ocp;
pub mod marine;
pub mod optimality;
pub mod cli;
