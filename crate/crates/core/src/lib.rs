pub mod analysis;
pub mod coxeter;
pub mod moves;
pub mod pipeline;
pub mod rosegraph;
pub mod spine;
pub mod words;
