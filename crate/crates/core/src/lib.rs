pub mod assets;
pub mod envgen;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod placement;
pub mod robot;
pub mod logstore;
pub mod noise;
pub mod sim;
