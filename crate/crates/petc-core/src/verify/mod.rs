//! Runtime verification of the storage-function certificate along traces,
//! plus run metrics.

mod monitor;
mod storage;

pub use monitor::{
    check_flow, check_jumps, check_trace, metrics, summarize, AgentMetrics, FlowSection,
    FlowViolation, JumpSection, JumpViolation, MetricsSection, MonitorReport, RunSummary,
};
pub use storage::{p_flag, phi_bar, w_tilde, StorageEvaluator};
