//! Ground-truthed synthetic scenes with controlled endmember variability.

mod abundance;
mod builtin;
mod config;
mod radiative;
mod scene;
mod variants;

pub use abundance::{sample_abundances_dirichlet, sample_abundances_grf};
pub use builtin::{builtin_library, builtin_wavelengths, BUILTIN_CLASSES};
pub use config::{
    AbundanceFieldConfig, AbundanceGenerator, BaseSpectra, ClassVariability, Interval, SceneConfig,
    VariabilityConfig,
};
pub use radiative::{atmospheric_reflectance, hapke_reflectance};
pub use scene::{generate_variants, synthesize_from_config, synthesize_scene};
pub use variants::{scaling_variants, ScalingMode};
