#![allow(dead_code)]
pub mod euler;
