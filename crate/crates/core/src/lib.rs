pub mod bench;
pub mod data;
pub mod ground;
pub mod lang;
pub mod learning;
pub mod npp;
pub mod same;
pub mod solver;
pub mod task;
pub mod wmc;
