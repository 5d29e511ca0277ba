pub mod audit;
pub mod cli;
pub mod contracts;
pub mod crypto;
pub mod encoding;
pub mod model;
pub mod node;
pub mod orderer;
pub mod sbac;
pub mod shard;
pub mod sim;
pub mod validity;
