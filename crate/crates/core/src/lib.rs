pub mod demo;
pub mod diagram;
pub mod donotation;
pub mod polar;
pub mod random;
pub mod session;
pub mod shuffle;
pub mod signature;
pub mod stochastic;
