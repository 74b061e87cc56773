pub mod learn;
pub mod scanmap;
pub mod simulate;
pub mod validate;
