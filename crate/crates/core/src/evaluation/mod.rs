//! Metrics and the downstream analyses: source/target correlation,
//! calibration-based model selection, survey burden and response times.

mod burden;
mod calibration;
mod metrics;
mod response_time;
mod stats;
mod transfer;

pub use burden::{
    best_stress_model, burden_percentages, classify_percentage, stress_leakage_check, write_table2_csv, LeakageRow,
    SurveyBurdenRow,
};
pub use calibration::{calibrate_subject, select_best, CalibrationResult, CALIBRATION_THRESHOLD};
pub use metrics::{positive_percentage, round_half_up, weighted_f1, Confusion};
pub use response_time::{
    gamified_sessions, read_events, response_time_analysis, PositionDifference, QuestionDuration, ResponseEvent, ResponseTimeTable, EVENTS_HEADER,
};
pub use stats::{inc_beta, ln_gamma, mean_std, pearson, t_two_sided_p, CorrelationRecord};
pub use transfer::{correlate_source_target, write_figure3_csv, TransferCorrelations};
