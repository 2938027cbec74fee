#![allow(dead_code)]

pub mod nb;
pub mod silence;
pub mod wire_fuzz;
