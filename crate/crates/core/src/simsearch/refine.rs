use crate::error::Result;
use crate::signal::{AudioSignal, GapMask};

/// Offset within `[-radius, radius]` that best continues the observation's
/// boundary samples.
///
/// For a candidate starting at `start + o` in `source`, the residual is
/// `|y[ts-1] - s[start+ts-1+o]| + |y[te+1] - s[start+te+1+o]|`, i.e. the
/// samples just outside the gap are compared against the candidate's own
/// context at the same positions. Offsets whose boundary samples fall outside
/// the source are skipped. Ties go to the smallest `|o|`, negative first.
/// Returns 0 when the gap touches either end of the frame.
pub fn refine_offset(y: &[f64], source: &[f64], start: i64, mask: &GapMask, radius: usize) -> i64 {
    if mask.start() == 0 || mask.end() + 1 >= mask.n() {
        return 0;
    }
    let left = y[mask.start() - 1];
    let right = y[mask.end() + 1];
    let len = source.len() as i64;
    let mut best: Option<(f64, i64)> = None;
    let candidates = std::iter::once(0).chain((1..=radius as i64).flat_map(|k| [-k, k]));
    for o in candidates {
        let li = start + mask.start() as i64 - 1 + o;
        let ri = start + mask.end() as i64 + 1 + o;
        if li < 0 || ri >= len {
            continue;
        }
        let r = (left - source[li as usize]).abs() + (right - source[ri as usize]).abs();
        if best.is_none_or(|(b, _)| r < b) {
            best = Some((r, o));
        }
    }
    best.map_or(0, |(_, o)| o)
}

/// `round(index * to / from)`, halves away from zero.
pub fn scale_index(index: i64, from_rate: u32, to_rate: u32) -> i64 {
    let num = index as i128 * to_rate as i128;
    let den = from_rate as i128;
    let q = (2 * num.abs() + den) / (2 * den);
    (num.signum() * q) as i64
}

/// Length-`n` slice of `source` starting at `start`; samples outside the
/// source are zero.
pub fn extract_segment(source: &AudioSignal, start: i64, n: usize) -> Result<AudioSignal> {
    let s = source.samples();
    let out = (0..n as i64)
        .map(|i| {
            let j = start + i;
            if (0..s.len() as i64).contains(&j) {
                s[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    source.with_samples(out)
}

/// Guide segment from a working-rate source given a start index at the
/// search rate.
pub fn extract_guide(
    source: &AudioSignal,
    start_at_search_rate: i64,
    search_rate: u32,
    n: usize,
) -> Result<AudioSignal> {
    let start = scale_index(start_at_search_rate, search_rate, source.sample_rate());
    extract_segment(source, start, n)
}
