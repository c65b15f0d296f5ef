//! File formats: JSON model descriptions, binary weight files, IDX
//! datasets, and trace/report emission.

mod idx;
mod model_file;
mod trace;
mod weights;

pub use idx::load_idx;
pub use model_file::{load_model, parse_model};
pub use trace::{
    layer_traces_to_csv, layer_traces_to_json, trace_from_json, trace_rows_from_csv,
    trace_to_csv, trace_to_json, traffic_report_to_csv, traffic_report_to_json, TraceCsvRow,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights};
