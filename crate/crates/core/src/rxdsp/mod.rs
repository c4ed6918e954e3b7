//! Receiver DSP: equalization, carrier recovery, nonlinear compensation and
//! soft detection.

pub mod bcjr;
pub mod cpr;
pub mod demap;
pub mod mimo;
pub mod preq;
pub mod volterra;

pub use crate::channel::cd_compensate;
pub use bcjr::{bcjr_detect, bcjr_detect_windowed, BcjrOptions, BcjrOutput, InitialState};
pub use cpr::{carrier_recover, estimate_frequency_offset, CarrierOutput, CprConfig};
pub use demap::{soft_demap, symbol_posteriors, LlrBlock};
pub use mimo::{mimo_equalize, EqualizerConfig, EqualizerMode, EqualizerState};
pub use preq::{estimate_preq_alpha, preq_filter, PartialResponseModel};
pub use volterra::{volterra_equalize, Placement, VolterraConfig, VolterraOutput};
