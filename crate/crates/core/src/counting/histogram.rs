//! Start-stop coincidence histograms (start = Stokes click, stop =
//! anti-Stokes click) and their CSV form.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use super::simulate::{Channel, Event, RNG_NAME};
use super::CountingError;

/// Acquisition bin of the time tagger.
pub const DEFAULT_BIN_WIDTH_NS: f64 = 0.512;
/// Delay range on each side, in repetition periods.
pub const DEFAULT_SPAN_PERIODS: f64 = 26.5;
/// Minimum positive-side span, in repetition periods.
const MIN_SPAN_PERIODS: f64 = 26.0;

pub const EVENTS_CSV_HEADER: &str = "rep_index,channel,timestamp_ns";

/// Counts of start-stop delays `t_stop - t_start` in bins of width `w`
/// centred on `j·w` for `j = -J..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    bin_width_ns: f64,
    rep_period_ns: f64,
    half_bins: usize,
    counts: Vec<u64>,
    n_reps: u64,
    seed: Option<u64>,
    total_starts: u64,
    total_stops: u64,
    crosstalk_subtracted: bool,
}

impl CoincidenceHistogram {
    /// All-zero histogram reaching `span_periods` periods on each side.
    pub fn empty(
        bin_width_ns: f64,
        rep_period_ns: f64,
        span_periods: f64,
    ) -> Result<Self, CountingError> {
        if !(bin_width_ns > 0.0 && bin_width_ns.is_finite()) {
            return Err(CountingError::InvalidHistogram(format!(
                "bin width must be positive, got {bin_width_ns}"
            )));
        }
        if !(rep_period_ns > 0.0 && rep_period_ns.is_finite()) {
            return Err(CountingError::InvalidHistogram(format!(
                "repetition period must be positive, got {rep_period_ns}"
            )));
        }
        if !(span_periods.is_finite() && span_periods > 0.0) {
            return Err(CountingError::InvalidHistogram(format!(
                "span must be positive, got {span_periods} periods"
            )));
        }
        let half_bins = (span_periods * rep_period_ns / bin_width_ns).ceil() as usize;
        Self::from_counts(bin_width_ns, rep_period_ns, vec![0; 2 * half_bins + 1])
    }

    /// Histogram with `counts.len() = 2J + 1` bins centred on `-J..=J`.
    pub fn from_counts(
        bin_width_ns: f64,
        rep_period_ns: f64,
        counts: Vec<u64>,
    ) -> Result<Self, CountingError> {
        if counts.len() % 2 == 0 {
            return Err(CountingError::InvalidHistogram(format!(
                "need an odd number of bins centred on zero delay, got {}",
                counts.len()
            )));
        }
        if !(bin_width_ns > 0.0 && rep_period_ns > 0.0) {
            return Err(CountingError::InvalidHistogram(
                "bin width and repetition period must be positive".into(),
            ));
        }
        let half_bins = (counts.len() - 1) / 2;
        let h = Self {
            bin_width_ns,
            rep_period_ns,
            half_bins,
            counts,
            n_reps: 0,
            seed: None,
            total_starts: 0,
            total_stops: 0,
            crosstalk_subtracted: false,
        };
        let needed = MIN_SPAN_PERIODS * rep_period_ns;
        if h.reach_ns() < needed {
            return Err(CountingError::InsufficientSpan {
                needed_ns: needed,
                have_ns: h.reach_ns(),
            });
        }
        Ok(h)
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ns
    }

    pub fn rep_period_ns(&self) -> f64 {
        self.rep_period_ns
    }

    pub fn half_bins(&self) -> usize {
        self.half_bins
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_reps(&self) -> u64 {
        self.n_reps
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn total_starts(&self) -> u64 {
        self.total_starts
    }

    pub fn total_stops(&self) -> u64 {
        self.total_stops
    }

    pub fn crosstalk_subtracted(&self) -> bool {
        self.crosstalk_subtracted
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn set_provenance(&mut self, n_reps: u64, seed: Option<u64>) {
        self.n_reps = n_reps;
        self.seed = seed;
    }

    pub fn set_totals(&mut self, starts: u64, stops: u64) {
        self.total_starts = starts;
        self.total_stops = stops;
    }

    pub fn bin_center_ns(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins as f64) * self.bin_width_ns
    }

    pub fn bin_start_ns(&self, i: usize) -> f64 {
        self.bin_center_ns(i) - 0.5 * self.bin_width_ns
    }

    /// Largest positive delay covered.
    pub fn reach_ns(&self) -> f64 {
        (self.half_bins as f64 + 0.5) * self.bin_width_ns
    }

    /// Repetition lag beyond which no pair can land in the histogram.
    pub fn window_reps(&self) -> u64 {
        (self.reach_ns() / self.rep_period_ns).ceil() as u64 + 1
    }

    pub fn bin_index(&self, delay_ns: f64) -> Option<usize> {
        let j = (delay_ns / self.bin_width_ns + 0.5).floor();
        let i = j + self.half_bins as f64;
        if i >= 0.0 && i < self.counts.len() as f64 {
            Some(i as usize)
        } else {
            None
        }
    }

    pub fn add_delay(&mut self, delay_ns: f64) {
        if let Some(i) = self.bin_index(delay_ns) {
            self.counts[i] += 1;
        }
    }

    /// Sum of the bins whose centres lie in `[lo, hi)`, and their number.
    pub fn sum_in(&self, lo_ns: f64, hi_ns: f64) -> (u64, usize) {
        let mut sum = 0;
        let mut bins = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            let t = self.bin_center_ns(i);
            if t >= lo_ns && t < hi_ns {
                sum += c;
                bins += 1;
            }
        }
        (sum, bins)
    }

    fn check_same_binning(&self, other: &Self) -> Result<(), CountingError> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !close(self.bin_width_ns, other.bin_width_ns) {
            return Err(CountingError::BinningMismatch(format!(
                "bin widths {} and {} ns",
                self.bin_width_ns, other.bin_width_ns
            )));
        }
        if !close(self.rep_period_ns, other.rep_period_ns) {
            return Err(CountingError::BinningMismatch(format!(
                "repetition periods {} and {} ns",
                self.rep_period_ns, other.rep_period_ns
            )));
        }
        if self.half_bins != other.half_bins {
            return Err(CountingError::BinningMismatch(format!(
                "{} and {} bins",
                self.counts.len(),
                other.counts.len()
            )));
        }
        Ok(())
    }

    /// Adds the counts and totals of `other` (same binning).
    pub fn accumulate(&mut self, other: &Self) -> Result<(), CountingError> {
        self.check_same_binning(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_starts += other.total_starts;
        self.total_stops += other.total_stops;
        self.n_reps += other.n_reps;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# bin_width_ns={}", self.bin_width_ns)?;
        writeln!(out, "# rep_period_ns={}", self.rep_period_ns)?;
        writeln!(out, "# n_reps={}", self.n_reps)?;
        match self.seed {
            Some(s) => writeln!(out, "# seed={s}")?,
            None => writeln!(out, "# seed=none")?,
        }
        writeln!(out, "# rng={RNG_NAME}")?;
        writeln!(out, "# total_starts={}", self.total_starts)?;
        writeln!(out, "# total_stops={}", self.total_stops)?;
        writeln!(out, "# crosstalk_subtracted={}", self.crosstalk_subtracted)?;
        writeln!(out, "bin_start_ns,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", self.bin_start_ns(i), c)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CountingError> {
        let err = |m: String| CountingError::Csv(m);
        let mut meta = std::collections::HashMap::new();
        let mut rows: Vec<(f64, u64)> = Vec::new();
        let mut header_seen = false;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "bin_start_ns,count" {
                    return Err(err(format!(
                        "expected header `bin_start_ns,count`, found `{line}`"
                    )));
                }
                header_seen = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| err(format!("line {}: expected two fields", n + 1)))?;
            let start: f64 = a
                .trim()
                .parse()
                .map_err(|_| err(format!("line {}: bad bin start `{a}`", n + 1)))?;
            let count: u64 = b
                .trim()
                .parse()
                .map_err(|_| err(format!("line {}: bad count `{b}`", n + 1)))?;
            rows.push((start, count));
        }
        if !header_seen {
            return Err(err("missing `bin_start_ns,count` header".into()));
        }
        let get = |k: &str| -> Result<f64, CountingError> {
            meta.get(k)
                .ok_or_else(|| err(format!("missing `# {k}=` metadata")))?
                .parse()
                .map_err(|_| err(format!("bad value for {k}")))
        };
        let bin_width = get("bin_width_ns")?;
        let period = get("rep_period_ns")?;
        let counts: Vec<u64> = rows.iter().map(|r| r.1).collect();
        let mut h = Self::from_counts(bin_width, period, counts)?;
        for (i, (start, _)) in rows.iter().enumerate() {
            if (start - h.bin_start_ns(i)).abs() > 1e-6 * bin_width {
                return Err(err(format!(
                    "bin {i} starts at {start} ns, expected {} ns",
                    h.bin_start_ns(i)
                )));
            }
        }
        let int = |k: &str| -> Result<u64, CountingError> {
            match meta.get(k) {
                None => Ok(0),
                Some(v) => v.parse().map_err(|_| err(format!("bad value for {k}"))),
            }
        };
        h.n_reps = int("n_reps")?;
        h.total_starts = int("total_starts")?;
        h.total_stops = int("total_stops")?;
        h.seed = match meta.get("seed").map(String::as_str) {
            None | Some("none") => None,
            Some(v) => Some(v.parse().map_err(|_| err("bad value for seed".into()))?),
        };
        h.crosstalk_subtracted = meta
            .get("crosstalk_subtracted")
            .is_some_and(|v| v == "true");
        Ok(h)
    }
}

/// Streaming pairing of a time-ordered event stream: every stop is paired
/// with every start within the histogram reach, in either order.
#[derive(Debug, Clone)]
pub struct HistogramBuilder {
    hist: CoincidenceHistogram,
    window: u64,
    recent: VecDeque<Event>,
    last: Option<(u64, f64)>,
    events: u64,
    max_rep: u64,
}

impl HistogramBuilder {
    pub fn new(
        bin_width_ns: f64,
        rep_period_ns: f64,
        span_periods: f64,
    ) -> Result<Self, CountingError> {
        Ok(Self::from_template(&CoincidenceHistogram::empty(
            bin_width_ns,
            rep_period_ns,
            span_periods,
        )?))
    }

    pub(crate) fn from_template(template: &CoincidenceHistogram) -> Self {
        let mut hist = template.clone();
        hist.counts.iter_mut().for_each(|c| *c = 0);
        hist.total_starts = 0;
        hist.total_stops = 0;
        hist.n_reps = 0;
        Self {
            window: hist.window_reps(),
            hist,
            recent: VecDeque::new(),
            last: None,
            events: 0,
            max_rep: 0,
        }
    }

    pub fn push(&mut self, e: Event) -> Result<(), CountingError> {
        if let Some(last) = self.last {
            if (e.rep_index, e.offset_ns) < last {
                return Err(CountingError::Unsorted {
                    rep_index: e.rep_index,
                });
            }
        }
        self.last = Some((e.rep_index, e.offset_ns));
        while self
            .recent
            .front()
            .is_some_and(|r| r.rep_index + self.window < e.rep_index)
        {
            self.recent.pop_front();
        }
        for r in &self.recent {
            if r.channel != e.channel {
                self.hist
                    .add_delay(pair_delay(r, &e, self.hist.rep_period_ns));
            }
        }
        match e.channel {
            Channel::S => self.hist.total_starts += 1,
            Channel::AS => self.hist.total_stops += 1,
        }
        self.events += 1;
        self.max_rep = self.max_rep.max(e.rep_index);
        self.recent.push_back(e);
        Ok(())
    }

    pub(crate) fn finish_partial(self) -> CoincidenceHistogram {
        self.hist
    }

    /// Completed histogram; `n_reps` is taken as one past the last
    /// repetition seen unless set later.
    pub fn finish(mut self) -> Result<CoincidenceHistogram, CountingError> {
        if self.events == 0 {
            return Err(CountingError::EmptyStream);
        }
        self.hist.n_reps = self.max_rep + 1;
        Ok(self.hist)
    }
}

/// `t_stop - t_start` of two clicks on different channels.
fn pair_delay(a: &Event, b: &Event, period: f64) -> f64 {
    let (start, stop) = if a.channel == Channel::S {
        (a, b)
    } else {
        (b, a)
    };
    let lag = stop.rep_index as i128 - start.rep_index as i128;
    lag as f64 * period + (stop.offset_ns - start.offset_ns)
}

/// Adds the pairs formed between two disjoint event sets.
pub(crate) fn cross_pairs(hist: &mut CoincidenceHistogram, earlier: &[Event], later: &[Event]) {
    let period = hist.rep_period_ns;
    for a in earlier {
        for b in later {
            if a.channel != b.channel {
                hist.add_delay(pair_delay(a, b, period));
            }
        }
    }
}

/// Histogram of a time-ordered event stream.
pub fn build_histogram<I: IntoIterator<Item = Event>>(
    events: I,
    bin_width_ns: f64,
    rep_period_ns: f64,
    span_periods: f64,
) -> Result<CoincidenceHistogram, CountingError> {
    let mut b = HistogramBuilder::new(bin_width_ns, rep_period_ns, span_periods)?;
    for e in events {
        b.push(e)?;
    }
    b.finish()
}

/// `both - write_only`, bin by bin, clamped at zero. When the acquisitions
/// differ in length the write-only counts are first scaled by the ratio of
/// repetitions and rounded.
pub fn subtract_crosstalk(
    both: &CoincidenceHistogram,
    write_only: &CoincidenceHistogram,
) -> Result<CoincidenceHistogram, CountingError> {
    both.check_same_binning(write_only)?;
    let scale = if both.n_reps == write_only.n_reps || write_only.n_reps == 0 || both.n_reps == 0 {
        1.0
    } else {
        both.n_reps as f64 / write_only.n_reps as f64
    };
    let mut out = both.clone();
    for (o, &w) in out.counts.iter_mut().zip(&write_only.counts) {
        let w = if scale == 1.0 {
            w
        } else {
            (w as f64 * scale).round() as u64
        };
        *o = o.saturating_sub(w);
    }
    out.crosstalk_subtracted = true;
    Ok(out)
}

pub fn write_events_csv<W: Write, I: IntoIterator<Item = Event>>(
    events: I,
    rep_period_ns: f64,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{EVENTS_CSV_HEADER}")?;
    for e in events {
        writeln!(
            out,
            "{},{},{}",
            e.rep_index,
            e.channel.as_str(),
            e.timestamp_ns(rep_period_ns)
        )?;
    }
    Ok(())
}

pub fn read_events_csv<R: BufRead>(
    input: R,
    rep_period_ns: f64,
) -> Result<Vec<Event>, CountingError> {
    let err = |m: String| CountingError::Csv(m);
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| err("empty events file".into()))?
        .map_err(|e| err(e.to_string()))?;
    if header.trim() != EVENTS_CSV_HEADER {
        return Err(err(format!(
            "expected header `{EVENTS_CSV_HEADER}`, found `{header}`"
        )));
    }
    let mut events = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("row {}: expected 3 fields", n + 1)));
        }
        let rep_index: u64 = f[0]
            .parse()
            .map_err(|_| err(format!("row {}: bad rep_index", n + 1)))?;
        let channel = Channel::parse(f[1])
            .ok_or_else(|| err(format!("row {}: unknown channel `{}`", n + 1, f[1])))?;
        let t: f64 = f[2]
            .parse()
            .map_err(|_| err(format!("row {}: bad timestamp", n + 1)))?;
        let offset_ns = t - rep_index as f64 * rep_period_ns;
        if !(offset_ns > -1e-6 && offset_ns < rep_period_ns + 1e-6) {
            return Err(err(format!(
                "row {}: timestamp outside repetition {rep_index}",
                n + 1
            )));
        }
        events.push(Event {
            rep_index,
            channel,
            offset_ns: offset_ns.clamp(0.0, rep_period_ns),
        });
    }
    Ok(events)
}
