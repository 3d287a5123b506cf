use std::ops::Range;

use serde::Serialize;

use crate::dsp::{chromagram, filter_reach, resample, stft_magnitude, FeatureMatrix};
use crate::error::{Error, Result};
use crate::signal::{AudioSignal, GapMask, Observation};
use crate::simsearch::config::{FeatureKind, SearchConfig};
use crate::simsearch::cost::{frame_weights, weighted_distance, WeightedFeature};
use crate::simsearch::refine::{extract_segment, refine_offset, scale_index};

/// Source signals to draw guides from, all at one working rate.
#[derive(Debug, Clone)]
pub struct Corpus {
    items: Vec<AudioSignal>,
}

impl Corpus {
    pub fn new(items: Vec<AudioSignal>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::EmptyCorpus);
        };
        let rate = first.sample_rate();
        if let Some(bad) = items.iter().find(|s| s.sample_rate() != rate) {
            return Err(Error::Parameter(format!(
                "corpus items must share one sample rate: {rate} vs {}",
                bad.sample_rate()
            )));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[AudioSignal] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.items[0].sample_rate()
    }
}

/// Within-track corpus: the track before the excerpt and the track after it.
/// Empty sides are dropped.
pub fn build_corpus(track: &AudioSignal, excerpt: Range<usize>) -> Result<Corpus> {
    if excerpt.start >= excerpt.end || excerpt.end > track.len() {
        return Err(Error::Range(format!(
            "excerpt {excerpt:?} outside a track of {} samples",
            track.len()
        )));
    }
    let mut items = Vec::with_capacity(2);
    if excerpt.start > 0 {
        items.push(track.slice(0, excerpt.start)?);
    }
    if excerpt.end < track.len() {
        items.push(track.slice(excerpt.end, track.len())?);
    }
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(items)
}

/// Features of one signal at the search rate, one matrix per spec.
fn compute_features(x: &AudioSignal, cfg: &SearchConfig) -> Result<Vec<FeatureMatrix>> {
    let stft = stft_magnitude(x, &cfg.stft)?;
    let needs_chroma = cfg.specs.iter().any(|s| s.kind == FeatureKind::Chroma);
    let chroma = if needs_chroma {
        Some(chromagram(&stft, x.sample_rate(), cfg.tuning_ref)?)
    } else {
        None
    };
    Ok(cfg
        .specs
        .iter()
        .map(|s| match s.kind {
            FeatureKind::StftMag => stft.clone(),
            FeatureKind::Chroma => chroma.clone().expect("chroma computed when requested"),
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct IndexedSource {
    /// The source resampled to the search rate.
    pub signal: AudioSignal,
    /// Per-spec features; empty when the source is shorter than one window.
    pub features: Vec<FeatureMatrix>,
}

impl IndexedSource {
    pub fn frames(&self) -> usize {
        self.features.first().map_or(0, FeatureMatrix::frames)
    }
}

/// Corpus features, computed once and scanned by sliding the observation's
/// frame grid over each source.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    pub sources: Vec<IndexedSource>,
}

impl SearchIndex {
    pub fn build(corpus: &Corpus, cfg: &SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let sources = corpus
            .items()
            .iter()
            .map(|item| {
                let signal = resample(item, cfg.search_rate)?;
                let features = if signal.len() >= cfg.stft.window_len {
                    compute_features(&signal, cfg)?
                } else {
                    Vec::new()
                };
                Ok(IndexedSource { signal, features })
            })
            .collect::<Result<_>>()?;
        Ok(Self { sources })
    }

    /// Cost of every coarse-grid placement, in scan order
    /// (source id, then start). Returns `(source_id, start, cost)` with the
    /// start in samples at the search rate; it may be negative when the
    /// candidate's leading samples fall before the source.
    pub fn grid_costs(&self, query: &SearchQuery, cfg: &SearchConfig) -> Result<Vec<(usize, i64, f64)>> {
        let (first, last) = query.weighted_frame_span().ok_or(Error::NoCandidate)?;
        let step = cfg.frame_step() as i64;
        let mut out = Vec::new();
        for (id, src) in self.sources.iter().enumerate() {
            let frames = src.frames() as i64;
            // Every weighted frame must land on a full source frame.
            let lo = -(first as i64);
            let hi = frames - 1 - last as i64;
            if hi < lo {
                continue;
            }
            let mut j = lo.div_euclid(step) * step;
            if j < lo {
                j += step;
            }
            while j <= hi {
                let cost = query
                    .weights
                    .iter()
                    .zip(&query.features)
                    .zip(&src.features)
                    .filter(|((w, _), _)| w.alpha != 0.0)
                    .map(|((w, obs), cand)| w.alpha * weighted_distance(obs, cand, j, w))
                    .sum();
                out.push((id, j * cfg.stft.hop as i64, cost));
                j += step;
            }
        }
        Ok(out)
    }

    pub fn coarse_search(&self, query: &SearchQuery, cfg: &SearchConfig) -> Result<CoarseMatch> {
        let mut best: Option<CoarseMatch> = None;
        for (source_id, start, cost) in self.grid_costs(query, cfg)? {
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(CoarseMatch {
                    source_id,
                    start,
                    cost,
                });
            }
        }
        best.ok_or(Error::NoCandidate)
    }
}

/// The observation as seen by the search: resampled to the search rate,
/// with the gap widened by the resampler's reach so that no weighted frame
/// sees interpolation leakage from the gap.
#[derive(Debug, Clone)]
pub struct SearchQuery {
    pub y: AudioSignal,
    pub mask: GapMask,
    pub features: Vec<FeatureMatrix>,
    pub weights: Vec<WeightedFeature>,
}

impl SearchQuery {
    pub fn new(obs: &Observation, cfg: &SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let working = obs.sample_rate();
        let resampled = resample(&obs.y, cfg.search_rate)?;
        let ratio = cfg.search_rate as f64 / working as f64;
        let mask = obs
            .mask
            .rescaled(resampled.len(), ratio, filter_reach(working, cfg.search_rate))?;
        let y = resampled.with_samples(mask.mask(resampled.samples())?)?;
        let features = compute_features(&y, cfg)?;
        let weights = cfg
            .specs
            .iter()
            .map(|s| WeightedFeature {
                kind: s.kind,
                alpha: s.alpha,
                frame_weights: frame_weights(s, &mask, &cfg.stft, cfg.search_rate, cfg.context_secs),
            })
            .collect();
        Ok(Self {
            y,
            mask,
            features,
            weights,
        })
    }

    /// First and last frame carrying weight in any spec.
    pub fn weighted_frame_span(&self) -> Option<(usize, usize)> {
        let active = self.weights.iter().flat_map(|w| w.active().map(|(f, _)| f));
        active.fold(None, |acc, f| match acc {
            None => Some((f, f)),
            Some((lo, hi)) => Some((lo.min(f), hi.max(f))),
        })
    }
}

/// Result of the coarse scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarseMatch {
    pub source_id: usize,
    /// Candidate start in samples at the search rate.
    pub start: i64,
    pub cost: f64,
}

/// Final retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatch {
    pub source_id: usize,
    /// Coarse start at the search rate.
    pub coarse_start: i64,
    /// Boundary refinement at the search rate, within half a coarse hop.
    pub offset: i64,
    /// Coarse similarity cost of the selected placement.
    pub cost: f64,
    /// Final start in the working-rate source, after the second refinement.
    pub start: i64,
    /// The guide: `n` samples at the working rate.
    pub guide: AudioSignal,
}

pub fn coarse_search(corpus: &Corpus, obs: &Observation, cfg: &SearchConfig) -> Result<CoarseMatch> {
    let index = SearchIndex::build(corpus, cfg)?;
    let query = SearchQuery::new(obs, cfg)?;
    index.coarse_search(&query, cfg)
}

/// Coarse scan, boundary refinement at the search rate, index scaling and a
/// second boundary refinement at the working rate, then guide extraction.
pub fn search(corpus: &Corpus, obs: &Observation, cfg: &SearchConfig) -> Result<CandidateMatch> {
    if corpus.sample_rate() != obs.sample_rate() {
        return Err(Error::Parameter(format!(
            "corpus rate {} differs from observation rate {}",
            corpus.sample_rate(),
            obs.sample_rate()
        )));
    }
    let index = SearchIndex::build(corpus, cfg)?;
    let query = SearchQuery::new(obs, cfg)?;
    let coarse = index.coarse_search(&query, cfg)?;
    let src = &index.sources[coarse.source_id];
    let offset = refine_offset(
        query.y.samples(),
        src.signal.samples(),
        coarse.start,
        &query.mask,
        cfg.coarse_hop / 2,
    );

    let working = obs.sample_rate();
    let item = &corpus.items()[coarse.source_id];
    let scaled = scale_index(coarse.start + offset, cfg.search_rate, working);
    let radius = if working == cfg.search_rate {
        0
    } else {
        (working as f64 / cfg.search_rate as f64).ceil() as usize
    };
    let start = scaled + refine_offset(obs.samples(), item.samples(), scaled, &obs.mask, radius);
    let guide = extract_segment(item, start, obs.n())?;
    Ok(CandidateMatch {
        source_id: coarse.source_id,
        coarse_start: coarse.start,
        offset,
        cost: coarse.cost,
        start,
        guide,
    })
}
