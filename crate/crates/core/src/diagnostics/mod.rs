//! Read-only measurements over frozen models and datasets.

pub mod geometry;
pub mod interference;
pub mod metrics;
pub mod superposition;
pub mod value;

pub use geometry::{antipodal_pairs, data_geometry, frobenius_sweep, group_geometry, ordering_score, AntipodalReport, GeometryReport, PairingRule};
pub use interference::{interference_breakdown, interference_terms, Contribution, InterferenceBreakdown};
pub use metrics::{fev, r2_per_feature};
pub use superposition::{
    census_superposition, linear_superposition_test, onehot_vs_context, Census, FeatureVerdict, LinearProbe, OneHotContext, ProbeMethod,
    SuperpositionClass, SuperpositionVerdict,
};
pub use value::{coordinate_probe, fourier_projection, vc_ablation, AblationMode, CoordinateProbe, FourierReport, FrequencyFit};
