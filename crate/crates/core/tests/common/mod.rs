pub mod oracles;
pub mod stub;
