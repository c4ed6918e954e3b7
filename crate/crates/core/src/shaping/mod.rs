//! Probabilistic amplitude shaping: distribution matching, frame layout and
//! rate accounting.

mod ccdm;
mod pas;
mod rate;

pub use ccdm::{ccdm_decode, ccdm_encode, quantize_composition, Composition};
pub use pas::{
    composition_for, composition_log_rate, label_bits, pas_frame, write_frame_dump, Frame,
    FrameMetadata, PasFramer,
};
pub use rate::{bits_to_tbps, fec_margin, net_bitrate_tbps, rate_budget, RateBudget};
