//! Per-repetition click generation.
//!
//! Repetitions without any click are skipped with geometric jumps, so the
//! cost scales with the number of clicks rather than with `n_reps`. The
//! repetition range is cut into fixed chunks of [`CHUNK_REPS`]; chunk `k`
//! draws from ChaCha8 stream `k` of the model seed, which makes the output
//! independent of how chunks are scheduled.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{cross_pairs, CoincidenceHistogram, HistogramBuilder};
use super::CountingError;
use crate::analytic::{antistokes_click_prob, coincidence_prob, stokes_click_prob, AnalyticParams};

/// Pulse spacing at 80 MHz.
pub const DEFAULT_REP_PERIOD_NS: f64 = 12.5;
/// Repetitions per independently seeded chunk.
pub const CHUNK_REPS: u64 = 1 << 22;
/// Generator identifier recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8";

/// Chunks simulated concurrently before their histograms are merged.
const BATCH_CHUNKS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Stokes detector (start).
    #[serde(rename = "S")]
    S,
    /// Anti-Stokes detector (stop).
    #[serde(rename = "aS")]
    AS,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::S => "S",
            Channel::AS => "aS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(Channel::S),
            "aS" => Some(Channel::AS),
            _ => None,
        }
    }
}

/// A detector click `offset_ns` after the pulse of repetition `rep_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub rep_index: u64,
    pub channel: Channel,
    pub offset_ns: f64,
}

impl Event {
    pub fn timestamp_ns(&self, rep_period_ns: f64) -> f64 {
        self.rep_index as f64 * rep_period_ns + self.offset_ns
    }
}

/// Per-repetition click probabilities of the two detectors.
///
/// Signal clicks occur at the pulse time. Dark clicks (`dark_s`, `dark_as`
/// per repetition) fall uniformly within the period and only where the
/// channel has no signal click, so each channel clicks at most once per
/// repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickModel {
    pub p_s: f64,
    pub p_as: f64,
    pub p_joint: f64,
    #[serde(default = "default_rep_period")]
    pub rep_period_ns: f64,
    pub n_reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub dark_s: f64,
    #[serde(default)]
    pub dark_as: f64,
}

fn default_rep_period() -> f64 {
    DEFAULT_REP_PERIOD_NS
}

impl ClickModel {
    pub fn new(
        p_s: f64,
        p_as: f64,
        p_joint: f64,
        n_reps: u64,
        seed: u64,
    ) -> Result<Self, CountingError> {
        let m = Self {
            p_s,
            p_as,
            p_joint,
            rep_period_ns: DEFAULT_REP_PERIOD_NS,
            n_reps,
            seed,
            dark_s: 0.0,
            dark_as: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Click probabilities of the closed-form detector model.
    pub fn from_analytic(
        params: &AnalyticParams,
        n_reps: u64,
        seed: u64,
    ) -> Result<Self, CountingError> {
        params
            .validate()
            .map_err(|e| CountingError::InvalidModel(e.to_string()))?;
        let p_s = stokes_click_prob(params);
        let p_as = antistokes_click_prob(params);
        // Rounding can leave the joint probability a few ulps outside the
        // feasible interval.
        let p_joint = coincidence_prob(params).clamp((p_s + p_as - 1.0).max(0.0), p_s.min(p_as));
        Self::new(p_s, p_as, p_joint, n_reps, seed)
    }

    pub fn validate(&self) -> Result<(), CountingError> {
        let bad = |msg: String| Err(CountingError::InvalidModel(msg));
        for (name, p) in [
            ("p_s", self.p_s),
            ("p_as", self.p_as),
            ("p_joint", self.p_joint),
            ("dark_s", self.dark_s),
            ("dark_as", self.dark_as),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability, got {p}"));
            }
        }
        if !(self.rep_period_ns > 0.0 && self.rep_period_ns.is_finite()) {
            return bad(format!(
                "rep_period_ns must be positive, got {}",
                self.rep_period_ns
            ));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1".into());
        }
        let lo = (self.p_s + self.p_as - 1.0).max(0.0);
        let hi = self.p_s.min(self.p_as);
        if self.p_joint < lo || self.p_joint > hi {
            return Err(CountingError::Infeasible {
                p_s: self.p_s,
                p_as: self.p_as,
                p_joint: self.p_joint,
            });
        }
        Ok(())
    }

    /// `p_joint / (p_s p_as)`.
    pub fn expected_g2(&self) -> f64 {
        self.p_joint / (self.p_s * self.p_as)
    }

    pub fn n_chunks(&self) -> u64 {
        self.n_reps.div_ceil(CHUNK_REPS)
    }
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Both,
    SOnly,
    AsOnly,
    Neither,
}

/// Outcome probabilities conditioned on a repetition producing a click.
#[derive(Debug, Clone)]
struct Sampler {
    p_active: f64,
    weights: [(Outcome, f64); 4],
    dark_s: f64,
    dark_as: f64,
    dark_any: f64,
    period: f64,
}

impl Sampler {
    fn new(m: &ClickModel) -> Self {
        let p_none = (1.0 - m.p_s - m.p_as + m.p_joint).max(0.0);
        let dark_any = m.dark_s + m.dark_as - m.dark_s * m.dark_as;
        let w_dark_only = p_none * dark_any;
        let weights = [
            (Outcome::Both, m.p_joint),
            (Outcome::SOnly, (m.p_s - m.p_joint).max(0.0)),
            (Outcome::AsOnly, (m.p_as - m.p_joint).max(0.0)),
            (Outcome::Neither, w_dark_only),
        ];
        let p_active = weights.iter().map(|w| w.1).sum::<f64>().min(1.0);
        Self {
            p_active,
            weights,
            dark_s: m.dark_s,
            dark_as: m.dark_as,
            dark_any,
            period: m.rep_period_ns,
        }
    }

    /// Events of an active repetition, in time order.
    fn emit(&self, rep_index: u64, rng: &mut ChaCha8Rng, out: &mut VecDeque<Event>) {
        let mut u = rng.random::<f64>() * self.p_active;
        let mut outcome = Outcome::Neither;
        for &(o, w) in &self.weights {
            if u < w {
                outcome = o;
                break;
            }
            u -= w;
        }
        let (sig_s, sig_as) = match outcome {
            Outcome::Both => (true, true),
            Outcome::SOnly => (true, false),
            Outcome::AsOnly => (false, true),
            Outcome::Neither => (false, false),
        };
        let (dark_s, dark_as) = match outcome {
            // At least one dark click is known to have happened.
            Outcome::Neither => {
                let s = rng.random::<f64>() * self.dark_any < self.dark_s;
                let a = if s {
                    rng.random::<f64>() < self.dark_as
                } else {
                    true
                };
                (s, a)
            }
            _ => (
                !sig_s && self.dark_s > 0.0 && rng.random::<f64>() < self.dark_s,
                !sig_as && self.dark_as > 0.0 && rng.random::<f64>() < self.dark_as,
            ),
        };
        let mut events: [Option<Event>; 2] = [None, None];
        for (slot, (channel, sig, dark)) in events
            .iter_mut()
            .zip([(Channel::S, sig_s, dark_s), (Channel::AS, sig_as, dark_as)])
        {
            if sig || dark {
                let offset_ns = if sig {
                    0.0
                } else {
                    rng.random::<f64>() * self.period
                };
                *slot = Some(Event {
                    rep_index,
                    channel,
                    offset_ns,
                });
            }
        }
        match events {
            [Some(a), Some(b)] if b.offset_ns < a.offset_ns => {
                out.push_back(b);
                out.push_back(a);
            }
            _ => out.extend(events.into_iter().flatten()),
        }
    }
}

/// Events of one chunk `[start, end)`.
struct ChunkStream {
    sampler: Sampler,
    geometric: Option<Geometric>,
    rng: ChaCha8Rng,
    cursor: u64,
    end: u64,
    pending: VecDeque<Event>,
}

impl ChunkStream {
    fn new(model: &ClickModel, sampler: &Sampler, chunk: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(chunk);
        let start = chunk * CHUNK_REPS;
        let end = (start + CHUNK_REPS).min(model.n_reps);
        let geometric = if sampler.p_active > 0.0 {
            Some(Geometric::new(sampler.p_active).expect("probability in (0, 1]"))
        } else {
            None
        };
        Self {
            sampler: sampler.clone(),
            geometric,
            rng,
            cursor: start,
            end,
            pending: VecDeque::with_capacity(2),
        }
    }
}

impl Iterator for ChunkStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if let Some(e) = self.pending.pop_front() {
            return Some(e);
        }
        let geometric = self.geometric.as_ref()?;
        if self.cursor >= self.end {
            return None;
        }
        let skip = geometric.sample(&mut self.rng);
        let rep = self.cursor.saturating_add(skip);
        if rep >= self.end {
            self.cursor = self.end;
            return None;
        }
        self.cursor = rep + 1;
        self.sampler.emit(rep, &mut self.rng, &mut self.pending);
        self.pending.pop_front()
    }
}

/// Time-ordered click stream of a [`ClickModel`]; generated lazily.
pub struct ClickStream {
    model: ClickModel,
    sampler: Sampler,
    chunk: u64,
    current: Option<ChunkStream>,
}

impl ClickStream {
    pub fn model(&self) -> &ClickModel {
        &self.model
    }
}

impl Iterator for ClickStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        loop {
            if let Some(e) = self.current.as_mut().and_then(Iterator::next) {
                return Some(e);
            }
            if self.chunk >= self.model.n_chunks() {
                return None;
            }
            self.current = Some(ChunkStream::new(&self.model, &self.sampler, self.chunk));
            self.chunk += 1;
        }
    }
}

pub fn simulate_clicks(model: &ClickModel) -> Result<ClickStream, CountingError> {
    model.validate()?;
    Ok(ClickStream {
        model: model.clone(),
        sampler: Sampler::new(model),
        chunk: 0,
        current: None,
    })
}

struct ChunkResult {
    hist: CoincidenceHistogram,
    head: Vec<Event>,
    tail: Vec<Event>,
}

/// Simulates the model and accumulates its start-stop histogram without
/// materializing the event stream. Chunks run in parallel; the result is
/// identical to `build_histogram(simulate_clicks(model), ...)`.
pub fn simulate_histogram(
    model: &ClickModel,
    bin_width_ns: f64,
    span_periods: f64,
) -> Result<CoincidenceHistogram, CountingError> {
    model.validate()?;
    let template = CoincidenceHistogram::empty(bin_width_ns, model.rep_period_ns, span_periods)?;
    let window = template.window_reps();
    let sampler = Sampler::new(model);
    let n_chunks = model.n_chunks();
    let mut total = template.clone();
    let mut prev_tail: Vec<Event> = Vec::new();
    let mut first = 0u64;
    while first < n_chunks {
        let last = (first + BATCH_CHUNKS as u64).min(n_chunks);
        let results: Vec<ChunkResult> = (first..last)
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * CHUNK_REPS;
                let end = (start + CHUNK_REPS).min(model.n_reps);
                let mut builder = HistogramBuilder::from_template(&template);
                let mut head = Vec::new();
                let mut tail = Vec::new();
                for e in ChunkStream::new(model, &sampler, chunk) {
                    if e.rep_index < start + window {
                        head.push(e);
                    }
                    if e.rep_index + window >= end {
                        tail.push(e);
                    }
                    builder.push(e).expect("chunk events are ordered");
                }
                ChunkResult {
                    hist: builder.finish_partial(),
                    head,
                    tail,
                }
            })
            .collect();
        for r in results {
            total.accumulate(&r.hist)?;
            cross_pairs(&mut total, &prev_tail, &r.head);
            prev_tail = r.tail;
        }
        first = last;
    }
    total.set_provenance(model.n_reps, Some(model.seed));
    Ok(total)
}
