//! Scenario files, input profiles, trace output and run summaries.

mod config;
mod plot;
mod profile;
mod summary;
mod trace;

pub use config::{
    parse_scenario, parse_scenario_str, ConfigError, InterchangeSetup, KeyDoc, NodeSetup,
    PvSetup, ScenarioConfig, SupercapSetup, KEYS,
};
pub use plot::{emit_plot, render_plot};
pub use profile::{
    parse_env_csv, parse_env_csv_str, parse_load_csv, parse_load_csv_str, EnvProfile, EnvSample,
    LoadProfile, ProfileError, ENV_HEADER, LOAD_HEADER,
};
pub use summary::{summarize, SummaryError, SummaryMetrics};
pub use trace::{
    format_sig9, read_trace, read_trace_csv, trace_header, write_trace, write_trace_csv,
    TraceError,
};
