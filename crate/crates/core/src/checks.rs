//! Shape and ceiling checks on sweep and fit outputs, shared by the
//! reproduction commands and the acceptance driver.

use std::fmt;

use crate::analytic::SweepRow;
use crate::fitting::FitResult;
use crate::lindblad::SweepPoint;

/// Heralded anti-Stokes auto-correlation must stay below this on every
/// power-sweep row.
pub const CONDITIONAL_LIMIT: f64 = 0.1;
/// Largest allowed ratio between the thermal ceiling `1/n_th` and the
/// low-write plateau of the noise-free amplitude sweep.
pub const PLATEAU_CEILING_FACTOR: f64 = 3.0;
/// Relative tolerance on the fitted phonon lifetime.
pub const DECAY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub const REPORT_CSV_HEADER: &str = "check,passed,detail";

/// One CSV row per check.
pub fn write_report_csv<W: std::io::Write>(checks: &[Check], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER.split(','))?;
    for c in checks {
        w.write_record([
            c.name.as_str(),
            if c.passed { "true" } else { "false" },
            c.detail.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Rows of one read setting in order of increasing `p̄`.
fn by_setting(rows: &[SweepRow]) -> Vec<Vec<SweepRow>> {
    let n = rows.iter().map(|r| r.read_setting + 1).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let mut v: Vec<SweepRow> = rows
                .iter()
                .filter(|r| r.read_setting == k)
                .copied()
                .collect();
            v.sort_by(|a, b| a.p_bar.total_cmp(&b.p_bar));
            v
        })
        .filter(|v| !v.is_empty())
        .collect()
}

/// Cross-correlation against pump power: strictly decreasing beyond each
/// read setting's maximum, maxima ordered inversely with the anti-Stokes
/// noise, and heralded auto-correlation below [`CONDITIONAL_LIMIT`].
pub fn power_sweep_checks(rows: &[SweepRow]) -> Vec<Check> {
    let groups = by_setting(rows);
    let mut monotone = true;
    let mut detail = Vec::new();
    let mut plateaus: Vec<(f64, f64)> = Vec::new();
    for g in &groups {
        let values: Vec<f64> = g.iter().map(|r| r.g_ab).collect();
        let k = argmax(&values);
        // The plateau must sit below the top of the sweep for the decrease
        // to be observable at all.
        let ok = k + 1 < values.len() && strictly_decreasing(&values[k..]);
        monotone &= ok;
        detail.push(format!(
            "q_b={:e}: max {:.1} at p̄={:.2e}",
            g[0].q_b, values[k], g[k].p_bar
        ));
        plateaus.push((g[0].q_b, values[k]));
    }
    plateaus.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ordered = plateaus
        .windows(2)
        .all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1);
    let worst = rows
        .iter()
        .map(|r| r.g_cond)
        .fold(f64::NEG_INFINITY, f64::max);
    vec![
        Check::new(
            "g_ab decreasing above plateau",
            monotone && !groups.is_empty(),
            detail.join("; "),
        ),
        Check::new(
            "plateaus ordered inversely with q_b",
            ordered && plateaus.len() > 1,
            plateaus
                .iter()
                .map(|(q, g)| format!("{q:e}->{g:.1}"))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        Check::new(
            "heralded auto-correlation below limit",
            worst < CONDITIONAL_LIMIT,
            format!("max {worst:.3e} < {CONDITIONAL_LIMIT}"),
        ),
    ]
}

/// Sweep points of one read amplitude in order of increasing write
/// amplitude.
fn by_read_amplitude(points: &[SweepPoint]) -> Vec<Vec<SweepPoint>> {
    let mut reads: Vec<f64> = points.iter().map(|p| p.read_amplitude).collect();
    reads.sort_by(f64::total_cmp);
    reads.dedup();
    reads
        .iter()
        .map(|&a2| {
            let mut v: Vec<SweepPoint> = points
                .iter()
                .filter(|p| p.read_amplitude == a2)
                .copied()
                .collect();
            v.sort_by(|a, b| a.write_amplitude.total_cmp(&b.write_amplitude));
            v
        })
        .collect()
}

/// Every `g²` below `1/n_th`, and the lowest-write point of every read
/// amplitude within [`PLATEAU_CEILING_FACTOR`] of it. Meant for a sweep
/// with detection noise switched off.
pub fn ceiling_checks(points: &[SweepPoint], phonon_occupancy: f64) -> Vec<Check> {
    let ceiling = 1.0 / phonon_occupancy;
    let worst = points
        .iter()
        .map(|p| p.point.g2)
        .fold(f64::NEG_INFINITY, f64::max);
    let plateaus: Vec<(f64, f64)> = by_read_amplitude(points)
        .iter()
        .map(|g| (g[0].read_amplitude, g[0].point.g2))
        .collect();
    let near = plateaus
        .iter()
        .all(|&(_, g)| g * PLATEAU_CEILING_FACTOR >= ceiling && g < ceiling);
    vec![
        Check::new(
            "all g2 below 1/n_th",
            !points.is_empty() && worst < ceiling,
            format!("max {worst:.1} < {ceiling:.1}"),
        ),
        Check::new(
            "low-write plateau near 1/n_th",
            near && !plateaus.is_empty(),
            format!(
                "{} within factor {PLATEAU_CEILING_FACTOR} of {ceiling:.1}",
                plateaus
                    .iter()
                    .map(|(a, g)| format!("A2={a}: {g:.1}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ),
    ]
}

/// With dark counts present, `g²` rises with write amplitude from the
/// lowest amplitude up to its maximum, for every read amplitude.
pub fn downturn_check(points: &[SweepPoint]) -> Check {
    let groups = by_read_amplitude(points);
    let mut ok = !groups.is_empty();
    let mut detail = Vec::new();
    for g in &groups {
        let values: Vec<f64> = g.iter().map(|p| p.point.g2).collect();
        let k = argmax(&values);
        ok &= k > 0 && strictly_increasing(&values[..=k]);
        detail.push(format!(
            "A2={}: {:.2} at A1={} (n_S1={:.1e}) rising to {:.1} at A1={}",
            g[0].read_amplitude,
            values[0],
            g[0].write_amplitude,
            g[0].point.n_s1,
            values[k],
            g[k].write_amplitude
        ));
    }
    Check::new("g2 drops at lowest write amplitudes", ok, detail.join("; "))
}

/// Fitted lifetime within [`DECAY_TOLERANCE`] of the model input.
pub fn decay_check(fit: &FitResult, tau_m_ps: f64) -> Check {
    let err = (fit.tau - tau_m_ps).abs() / tau_m_ps;
    Check::new(
        "fitted lifetime matches input",
        err < DECAY_TOLERANCE,
        format!(
            "tau {:.3} ps vs {tau_m_ps} ps ({:.1} %)",
            fit.tau,
            100.0 * err
        ),
    )
}
