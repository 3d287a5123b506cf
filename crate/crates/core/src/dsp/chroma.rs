use crate::dsp::stft::FeatureMatrix;
use crate::error::Result;

pub const CHROMA_BINS: usize = 12;
/// STFT bins below this frequency carry no pitch-class information here.
pub const MIN_CHROMA_HZ: f64 = 55.0;

/// Pitch class (C = 0, ..., A = 9, B = 11) of a frequency under `tuning_ref` A4.
pub fn pitch_class(freq: f64, tuning_ref: f64) -> usize {
    let midi = (12.0 * (freq / tuning_ref).log2()).round() as i64 + 69;
    midi.rem_euclid(12) as usize
}

/// Fold STFT magnitudes into 12 pitch classes. Each class accumulates the
/// squared magnitude of every bin mapping to it; rows are L2-normalized and
/// silent rows stay zero. `stft` must have `fft_size / 2 + 1` bins.
pub fn chromagram(stft: &FeatureMatrix, sample_rate: u32, tuning_ref: f64) -> Result<FeatureMatrix> {
    let bins = stft.bins();
    let fft_size = 2 * (bins - 1);
    let nyquist = sample_rate as f64 / 2.0;
    let classes: Vec<Option<usize>> = (0..bins)
        .map(|f| {
            let hz = f as f64 * sample_rate as f64 / fft_size as f64;
            (hz >= MIN_CHROMA_HZ && hz <= nyquist).then(|| pitch_class(hz, tuning_ref))
        })
        .collect();

    let mut data = vec![0.0; stft.frames() * CHROMA_BINS];
    for t in 0..stft.frames() {
        let row = &mut data[t * CHROMA_BINS..(t + 1) * CHROMA_BINS];
        for (mag, class) in stft.frame(t).iter().zip(&classes) {
            if let Some(c) = class {
                row[*c] += mag * mag;
            }
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    FeatureMatrix::new(data, stft.frames(), CHROMA_BINS, stft.frame_rate())
}
