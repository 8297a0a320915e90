#![allow(dead_code)]

pub mod fixtures;
pub mod mock;
pub mod numeric;
pub mod oracles;
pub mod fewshot_grid;
