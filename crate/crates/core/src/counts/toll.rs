use std::collections::BTreeMap;

use chrono::{Duration, NaiveDateTime};

use super::{truncate_to_hour, CountsError, HourlyCount};

/// One closed-system toll record.
#[derive(Debug, Clone, PartialEq)]
pub struct TollTrip {
    pub entry_plaza: String,
    pub exit_plaza: String,
    pub entry_time: NaiveDateTime,
    pub vehicle_class: String,
}

impl TollTrip {
    pub fn new(
        entry_plaza: impl Into<String>,
        exit_plaza: impl Into<String>,
        entry_time: NaiveDateTime,
        vehicle_class: impl Into<String>,
    ) -> Result<Self, CountsError> {
        let entry_plaza = entry_plaza.into();
        let exit_plaza = exit_plaza.into();
        if entry_plaza == exit_plaza {
            return Err(CountsError::SamePlaza(entry_plaza));
        }
        Ok(TollTrip {
            entry_plaza,
            exit_plaza,
            entry_time,
            vehicle_class: vehicle_class.into(),
        })
    }
}

/// Plaza identifier to milepost, miles along a single linear highway.
pub type MilepostTable = BTreeMap<String, f64>;

/// The stretch between two plazas. Direction A→B is the one leaving `plaza_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub plaza_a: String,
    pub plaza_b: String,
}

impl Section {
    pub fn new(plaza_a: impl Into<String>, plaza_b: impl Into<String>) -> Self {
        Section {
            plaza_a: plaza_a.into(),
            plaza_b: plaza_b.into(),
        }
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.plaza_a, self.plaza_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionCounts {
    /// Contiguous hourly series from the first to the last passage hour,
    /// zero-filled.
    pub counts: Vec<HourlyCount>,
    pub traversing: usize,
    pub excluded: usize,
}

fn milepost(table: &MilepostTable, plaza: &str) -> Result<f64, CountsError> {
    table
        .get(plaza)
        .copied()
        .ok_or_else(|| CountsError::UnknownPlaza(plaza.to_string()))
}

/// Bidirectional hourly section counts from toll trips.
///
/// A trip counts when its entry–exit span covers the whole section. Its
/// passage hour is the hour it reaches the section boundary it enters by
/// (`plaza_a` going A→B, `plaza_b` going B→A), assuming constant `speed_mph`
/// from the entry plaza.
pub fn toll_to_section_counts(
    trips: &[TollTrip],
    mileposts: &MilepostTable,
    section: &Section,
    speed_mph: f64,
    region: &str,
) -> Result<SectionCounts, CountsError> {
    if !(speed_mph.is_finite() && speed_mph > 0.0) {
        return Err(CountsError::InvalidSpeed(speed_mph));
    }
    if section.plaza_a == section.plaza_b {
        return Err(CountsError::InvalidSection(format!(
            "both ends are `{}`",
            section.plaza_a
        )));
    }
    let m_a = milepost(mileposts, &section.plaza_a)?;
    let m_b = milepost(mileposts, &section.plaza_b)?;
    if m_a == m_b {
        return Err(CountsError::InvalidSection(format!(
            "`{}` and `{}` share milepost {m_a}",
            section.plaza_a, section.plaza_b
        )));
    }
    let (lo, hi) = (m_a.min(m_b), m_a.max(m_b));
    let section_sign = (m_b - m_a).signum();

    let mut bins: BTreeMap<NaiveDateTime, u64> = BTreeMap::new();
    let mut traversing = 0;
    for trip in trips {
        let m_in = milepost(mileposts, &trip.entry_plaza)?;
        let m_out = milepost(mileposts, &trip.exit_plaza)?;
        if !(m_in.min(m_out) <= lo && m_in.max(m_out) >= hi) {
            continue;
        }
        let boundary = if (m_out - m_in).signum() == section_sign {
            m_a
        } else {
            m_b
        };
        let hours = (boundary - m_in).abs() / speed_mph;
        let offset = Duration::milliseconds((hours * 3_600_000.0).round() as i64);
        *bins
            .entry(truncate_to_hour(trip.entry_time + offset))
            .or_default() += 1;
        traversing += 1;
    }

    let mut counts = Vec::new();
    if let (Some(first), Some(last)) = (bins.keys().next(), bins.keys().next_back()) {
        let mut t = *first;
        while t <= *last {
            let n = bins.get(&t).copied().unwrap_or(0);
            counts.push(HourlyCount::new(section.id(), region, t, n as f64)?);
            t += Duration::hours(1);
        }
    }
    Ok(SectionCounts {
        counts,
        traversing,
        excluded: trips.len() - traversing,
    })
}
