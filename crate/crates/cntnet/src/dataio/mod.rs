//! Binary parsers, the weight-file format, histograms and report files.

pub mod cifar;
pub mod histogram;
pub mod idx;
pub mod report;
pub mod weights;

pub use histogram::{histogram, Histogram, HistogramReport, Summary, DEFAULT_BINS};
pub use idx::{load_dir, load_images, parse_idx, IdxTensor, LabelledImages};
pub use report::{emit_report, read_report_json, ReportFormat};
pub use weights::{read_weights, write_weights, WeightFile};
