//! Linear spectral unmixing of hyperspectral images under endmember variability.
//!
//! The crate is organised around the data flow of a typical experiment:
//!
//! * [`spectra`] holds the shared data types (images, libraries, abundance maps,
//!   per-pixel endmember fields), forward mixing, metrics and file I/O.
//! * [`synth`] generates ground-truthed scenes with controlled variability.
//! * [`extract`] builds spectral libraries from an image (pure-pixel extraction
//!   over random pixel subsets followed by clustering).
//! * [`libops`] reduces, prunes and transforms libraries before unmixing.
//! * [`unmix`] is the solver suite (FCLS, MESMA, sparse regression, ELMM, PLMM).
//! * [`bench`] runs Monte Carlo comparisons and writes reports.

pub mod bench;
pub mod error;
pub mod extract;
pub mod libops;
mod linalg;
mod par;
pub mod rng;
pub mod spectra;
pub mod synth;
pub mod unmix;

pub use error::{Error, Result};
pub use linalg::project_simplex;
pub use spectra::{AbundanceMap, EndmemberField, SceneTruth, SpectralImage, SpectralLibrary};
