use std::collections::BTreeMap;

use serde::Serialize;

use super::classify::Outcome;
use super::runner::TrialReport;

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Frequency {
    pub count: u64,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl Frequency {
    pub fn new(count: u64, total: u64) -> Self {
        let (wilson_low, wilson_high) = wilson(count, total);
        Frequency { count, frequency: if total == 0 { 0.0 } else { count as f64 / total as f64 }, wilson_low, wilson_high }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Distribution { mean: 0.0, p50: 0.0, p90: 0.0, p99: 0.0, max: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Distribution {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: percentile(&v, 0.50),
            p90: percentile(&v, 0.90),
            p99: percentile(&v, 0.99),
            max: v[v.len() - 1],
        }
    }
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditSummary {
    pub total: u64,
    /// Trials in which the counter was non-zero.
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub trials: u64,
    pub outcomes: BTreeMap<String, Frequency>,
    pub violations: u64,
    pub honest_multicasts: Distribution,
    pub rounds: Distribution,
    pub iterations: Distribution,
    pub audits: BTreeMap<String, AuditSummary>,
}

impl SummaryStats {
    pub fn from_reports(reports: &[TrialReport]) -> Self {
        let total = reports.len() as u64;
        let outcomes = Outcome::ALL
            .iter()
            .map(|o| {
                let k = reports.iter().filter(|r| r.outcome == *o).count() as u64;
                (o.name().to_string(), Frequency::new(k, total))
            })
            .collect();
        let mut audits: BTreeMap<String, AuditSummary> = BTreeMap::new();
        for r in reports {
            for (k, v) in &r.audits {
                let e = audits.entry(k.clone()).or_insert(AuditSummary { total: 0, trials: 0 });
                e.total += v;
                e.trials += u64::from(*v > 0);
            }
        }
        let dist = |f: fn(&TrialReport) -> f64| Distribution::of(&reports.iter().map(f).collect::<Vec<_>>());
        SummaryStats {
            trials: total,
            outcomes,
            violations: reports.iter().filter(|r| r.outcome.is_violation()).count() as u64,
            honest_multicasts: dist(|r| r.honest_multicasts as f64),
            rounds: dist(|r| r.rounds as f64),
            iterations: dist(|r| r.iterations as f64),
            audits,
        }
    }

    pub fn frequency(&self, outcome: Outcome) -> f64 {
        self.outcomes.get(outcome.name()).map_or(0.0, |f| f.frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference_values() {
        // Reference: 0 of 100 → [0, 0.0370]; 50 of 100 → [0.4038, 0.5962].
        let (lo, hi) = wilson(0, 100);
        assert!(lo.abs() < 1e-12);
        assert!((hi - 0.0370).abs() < 1e-4);
        let (lo, hi) = wilson(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let d = Distribution::of(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((d.mean, d.p50, d.p90, d.max), (3.0, 3.0, 5.0, 5.0));
    }
}
