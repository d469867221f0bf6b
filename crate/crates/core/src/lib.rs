//! Fashion trend forecasting with knowledge-enhanced recurrent networks.

pub mod corpus;
pub mod gradkernel;
pub mod taxonomy;
pub mod kern;
pub mod baselines;
pub mod eval;
