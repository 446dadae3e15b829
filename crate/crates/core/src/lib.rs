pub mod dist;
pub mod error;
pub mod events;
pub mod flatten;
pub mod mcmc;
pub mod model;
pub mod predict;
pub mod series;
pub mod spatial;
