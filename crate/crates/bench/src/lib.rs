//! Scenario files, benchmark campaigns, open-loop replay and reports.

pub mod experiment;
pub mod replay;
pub mod report;
pub mod scenario;
