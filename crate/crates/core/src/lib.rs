//! Comorbidity network construction, differential-network features and a
//! conjoint-attention graph neural network for comorbidity risk prediction.

pub mod analysis;
pub mod cohort;
pub mod comorbidity;
pub mod error;
pub mod export;
pub mod features;
pub mod model;
pub mod pagerank;
pub mod patient_network;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DiseaseGraphF32 = comorbidity::DiseaseGraph<f32>;
pub type DiseaseGraphF64 = comorbidity::DiseaseGraph<f64>;
pub type DifferentialNetworkF32 = comorbidity::DifferentialNetwork<f32>;
pub type DifferentialNetworkF64 = comorbidity::DifferentialNetwork<f64>;
pub type FeatureMatrixF32 = features::FeatureMatrix<f32>;
pub type FeatureMatrixF64 = features::FeatureMatrix<f64>;
pub type CgrlModelF32 = model::CgrlModel<f32>;
pub type CgrlModelF64 = model::CgrlModel<f64>;
pub type CgrlParamsF32 = model::CgrlParams<f32>;
pub type CgrlParamsF64 = model::CgrlParams<f64>;
pub type GraphContextF32 = model::GraphContext<f32>;
pub type GraphContextF64 = model::GraphContext<f64>;
