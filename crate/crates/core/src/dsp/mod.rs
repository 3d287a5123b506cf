//! Signal utilities and the feature maps used by similarity search.

mod chroma;
mod fade;
mod resample;
mod stft;

pub use chroma::{chromagram, pitch_class, CHROMA_BINS, MIN_CHROMA_HZ};
pub use fade::{crossfade_at, crossfade_splice, fade_gain, fade_len};
pub use resample::{filter_reach, resample, resampled_len, HALF_TAPS};
pub use stft::{stft_magnitude, FeatureMatrix, StftConfig};
