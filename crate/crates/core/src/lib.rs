//! Characterization of notch-coupled superconducting CPW resonators.
//!
//! The crate covers the analysis chain from raw S21 sweeps to loss
//! mechanisms:
//!
//! - [`trace`]: validated S21 records, windowing and phase unwrapping
//! - [`notch`]: the hanger resonator transmission model, synthetic traces
//!   and coupling-Q extraction from linewidth
//! - [`delay`]: electrical-delay estimation with the resonance excluded
//! - [`fit`]: phase-model fitting with uncertainties and Qi decomposition
//! - [`cpw`]: conformal-mapping line constants and kinetic inductance
//! - [`tls`]: temperature/power surfaces of Qi and TLS regime analysis
//! - [`io`], [`cli`]: file formats and the `resonator` command line
//! - [`reference`]: measured tones and simulated mode data for damascene Ta
//!   devices

pub mod cli;
pub mod cpw;
pub mod delay;
pub mod error;
pub mod fit;
pub mod format;
pub mod io;
pub mod lsq;
pub mod notch;
pub mod reference;
pub mod tls;
pub mod trace;

pub use error::{Error, Result};
pub use fit::{FitConfig, Measured, ResonatorFit};
pub use notch::{NoiseSpec, NotchParams};
pub use trace::{Band, Trace, TraceMeta};
