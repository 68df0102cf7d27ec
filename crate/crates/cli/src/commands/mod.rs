pub mod benchmark;
pub mod calibrate;
pub mod compile;
pub mod stability;
pub mod tomography;
pub mod trajectory;
