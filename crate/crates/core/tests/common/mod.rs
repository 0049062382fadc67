#![allow(dead_code)]

pub mod engineered;
pub mod fixtures;
pub mod fold_oracle;
pub mod pieces_oracle;
