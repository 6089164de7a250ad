//! Shared data types, forward mixing, evaluation metrics and file formats.

mod io;
mod metrics;
mod mixing;
mod types;

pub use io::{
    load_abundances, load_field, load_image, load_library, save_abundances, save_field, save_image,
    save_library, ImageHeader,
};
pub use metrics::{rmse, sam_field, spectral_angle, SamNormalization};
pub use mixing::{add_noise, empirical_snr_db, mix_forward, mix_shared};
pub use types::{AbundanceMap, EndmemberField, LibraryClass, SceneTruth, SpectralImage, SpectralLibrary};
