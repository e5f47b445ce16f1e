use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{LedgerError, StabilizationEvent, StabilizationStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub carrier_id: String,
    pub age_years: f64,
    pub expected_bytes: u64,
    /// Curator demand in [0, 1].
    pub demand_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    pub risk: f64,
    pub gain: f64,
    pub demand: f64,
}

impl Default for PolicyWeights {
    fn default() -> Self {
        PolicyWeights {
            risk: 1.0 / 3.0,
            gain: 1.0 / 3.0,
            demand: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub rank: usize,
    pub carrier_id: String,
    pub score: f64,
}

/// Ranks candidates by `risk*age/max_age + gain*bytes/max_bytes +
/// demand*demand_score`, highest first, ties by carrier id.
pub fn select_candidates(candidates: &[Candidate], weights: PolicyWeights) -> Result<Vec<RankedCandidate>, LedgerError> {
    let sum = weights.risk + weights.gain + weights.demand;
    let weights_ok = [weights.risk, weights.gain, weights.demand]
        .iter()
        .all(|w| w.is_finite() && *w >= 0.0);
    if !weights_ok || (sum - 1.0).abs() > 1e-9 {
        return Err(LedgerError::WeightsNotNormalized(sum));
    }
    for c in candidates {
        let reason = if !(c.age_years.is_finite() && c.age_years >= 0.0) {
            Some("age must be a non-negative number")
        } else if !(0.0..=1.0).contains(&c.demand_score) {
            Some("demand score must lie in [0, 1]")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(LedgerError::InvalidCandidate {
                carrier_id: c.carrier_id.clone(),
                reason: reason.into(),
            });
        }
    }

    let max_age = candidates.iter().map(|c| c.age_years).fold(0.0, f64::max);
    let max_bytes = candidates.iter().map(|c| c.expected_bytes).max().unwrap_or(0);
    let normalize = |x: f64, max: f64| if max > 0.0 { x / max } else { 0.0 };
    let mut scored: Vec<(f64, &str)> = candidates
        .iter()
        .map(|c| {
            let score = weights.risk * normalize(c.age_years, max_age)
                + weights.gain * normalize(c.expected_bytes as f64, max_bytes as f64)
                + weights.demand * c.demand_score;
            (score, c.carrier_id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, id))| RankedCandidate {
            rank: i + 1,
            carrier_id: id.to_owned(),
            score,
        })
        .collect())
}

/// A run of whole calendar months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthPeriod {
    pub year: i32,
    /// 1-based first month.
    pub month: u32,
    pub months: u32,
}

impl MonthPeriod {
    pub fn single(year: i32, month: u32) -> Self {
        MonthPeriod { year, month, months: 1 }
    }

    fn month_start(&self, offset: u32) -> Option<chrono::DateTime<Utc>> {
        let index = self.year as i64 * 12 + (self.month as i64 - 1) + offset as i64;
        let date = NaiveDate::from_ymd_opt(index.div_euclid(12) as i32, index.rem_euclid(12) as u32 + 1, 1)?;
        Some(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0)?))
    }

    /// Half-open UTC interval covered by the period.
    pub fn bounds(&self) -> Result<(chrono::DateTime<Utc>, chrono::DateTime<Utc>), LedgerError> {
        if self.months == 0 || !(1..=12).contains(&self.month) {
            return Err(LedgerError::EmptyPeriod);
        }
        match (self.month_start(0), self.month_start(self.months)) {
            (Some(start), Some(end)) => Ok((start, end)),
            _ => Err(LedgerError::EmptyPeriod),
        }
    }

    /// The month containing `at`.
    pub fn containing(at: chrono::DateTime<Utc>) -> Self {
        MonthPeriod::single(at.year(), at.month())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputStats {
    pub months: u32,
    pub successful_carriers: u64,
    pub total_bytes: u64,
    pub carriers_per_month: f64,
    pub bytes_per_month: f64,
    /// Absent when nothing succeeded in the period.
    pub avg_bytes_per_carrier: Option<f64>,
}

/// Aggregates closed-successful events inside the period. A carrier counts
/// once; its bytes come from its successful event.
pub fn throughput_stats(events: &[StabilizationEvent], period: MonthPeriod) -> Result<ThroughputStats, LedgerError> {
    let (start, end) = period.bounds()?;
    let mut carriers = BTreeSet::new();
    let mut total_bytes = 0u64;
    for e in events {
        if e.status == StabilizationStatus::ClosedSuccessful
            && e.occurred_at >= start
            && e.occurred_at < end
            && carriers.insert(e.carrier_id.as_str())
        {
            total_bytes += e.output_bytes;
        }
    }
    let n = carriers.len() as u64;
    let months = period.months as f64;
    Ok(ThroughputStats {
        months: period.months,
        successful_carriers: n,
        total_bytes,
        carriers_per_month: n as f64 / months,
        bytes_per_month: total_bytes as f64 / months,
        avg_bytes_per_carrier: (n > 0).then(|| total_bytes as f64 / n as f64),
    })
}

/// Person-years needed to stabilize `total_bytes` at a per-person yearly rate.
pub fn staffing_person_years(total_bytes: f64, bytes_per_person_year: f64) -> f64 {
    total_bytes / bytes_per_person_year
}
