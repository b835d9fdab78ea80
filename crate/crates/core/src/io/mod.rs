//! Datasets: g2o files, synthetic generators, SNL conversion and solver
//! report serialization.

mod dataset;
pub mod g2o;
pub mod report;
mod snl;
pub mod synth;

pub use dataset::Dataset;
pub use g2o::{g2o_string, parse_g2o, parse_g2o_str, read_g2o, write_g2o, write_g2o_file};
pub use report::{read_report_json, write_report, ReportFormat};
pub use snl::convert_to_snl;
pub use synth::{
    generate_bipartite_sfm, generate_grid_pgo, random_instance, GridSpec, Noise,
    RandomInstanceSpec, SfmSpec,
};
