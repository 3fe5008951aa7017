//! Round-based FedAvg: client selection, local SGD, aggregation and the monitor hook.

mod aggregate;
mod client;
mod config;
mod engine;

pub use aggregate::{fedavg, RoundDelta};
pub use client::{local_train, local_train_with_stats, ClientUpdate, LocalStats};
pub use config::{select_clients, RoundConfig, Selection};
pub use engine::{Federation, Mitigation, MonitorHook, RoundRecord};
