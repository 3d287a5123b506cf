use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simdps_core::simsearch::{build_corpus, search, SearchConfig};
use simdps_core::{apply_mask, AudioSignal, GapMask};

fn track(rate: u32, secs: f64, seed: u64) -> AudioSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * rate as f64) as usize;
    let notes: Vec<f64> = (0..64).map(|_| 110.0 * 2f64.powf(rng.random_range(0..24) as f64 / 12.0)).collect();
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let k = (t / 0.25) as usize;
            let local = t - k as f64 * 0.25;
            let f = notes[k % notes.len()];
            (-local / 0.1).exp() * ((2.0 * PI * f * t).sin() + 0.3 * (4.0 * PI * f * t).sin())
                + 0.001 * rng.random_range(-1.0..1.0)
        })
        .collect();
    AudioSignal::new(x, rate).unwrap()
}

#[test]
fn planted_repeat_recovered_at_working_rate() {
    let rate = 44_100;
    let base = track(rate, 30.0, 1);
    let n = 4 * rate as usize;
    // Both placements sit on samples shared by the working and search grids.
    let (excerpt_at, copy_at) = (3 * rate as usize + 147, 20 * rate as usize + 7 * 147);
    let mut x = base.samples().to_vec();
    let excerpt = x[excerpt_at..excerpt_at + n].to_vec();
    x[copy_at..copy_at + n].copy_from_slice(&excerpt);
    let full = AudioSignal::new(x, rate).unwrap();
    let corpus = build_corpus(&full, excerpt_at..excerpt_at + n).unwrap();

    let mask = GapMask::centred(n, rate as usize).unwrap();
    let obs = apply_mask(&full.slice(excerpt_at, excerpt_at + n).unwrap(), &mask, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let cfg = SearchConfig {
        context_secs: 1.0,
        ..Default::default()
    };
    let m = search(&corpus, &obs, &cfg).unwrap();
    assert_eq!(m.source_id, 1);
    assert_eq!(m.start, (copy_at - excerpt_at - n) as i64);
    assert_eq!(m.guide.samples(), &excerpt[..]);
    assert_eq!(m.guide.sample_rate(), rate);
}
