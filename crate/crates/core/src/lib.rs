pub mod error;
pub mod num;
pub mod node;
pub mod params;
pub mod dynamics;
pub mod intervals;
pub mod orbit;
pub mod symbolic;
pub mod nonstable;
pub mod sim;
pub mod experiments;
pub mod config;
pub mod export;
pub mod plot;
pub mod sweep;
