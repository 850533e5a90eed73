//! Metric suite: P/R/F1 at fixed k, F1@O, F1@M, absent recall, the
//! present/absent protocol with macro averaging, and diversity diagnostics.

mod diversity;
mod metrics;

pub use diversity::{
    avg_unique_phrases, delimiter_following_states, mean_pairwise_cosine, sample_states,
    DiversityStats,
};
pub use metrics::{
    evaluate_dataset, f1_at_m, f1_at_o, match_at_k, recall_at_k, render_table, AbsentReport,
    MatchResult, MetricReport, PresentReport, Prf,
};
