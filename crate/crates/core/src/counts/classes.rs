use std::collections::BTreeSet;

use super::{CountsError, HourlyCount, TollTrip};

/// Which vehicle classes count as trucks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassRule {
    /// Keep everything.
    Any,
    Allow(BTreeSet<String>),
    Deny(BTreeSet<String>),
    /// Codes of the form `<H|L><axles>`, e.g. `H3` for a high vehicle with
    /// three axles.
    HeightAxles { require_high: bool, min_axles: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassFilter {
    pub rule: ClassRule,
    /// Codes the source dataset may contain; `None` accepts anything the rule
    /// can interpret.
    pub known: Option<BTreeSet<String>>,
    /// Reject unknown codes instead of dropping them.
    pub strict: bool,
}

fn set(codes: &[&str]) -> BTreeSet<String> {
    codes.iter().map(|c| c.to_string()).collect()
}

impl ClassFilter {
    pub fn identity() -> Self {
        ClassFilter {
            rule: ClassRule::Any,
            known: None,
            strict: false,
        }
    }

    /// High vehicles with three or more axles.
    pub fn ny_thruway() -> Self {
        ClassFilter {
            rule: ClassRule::HeightAxles {
                require_high: true,
                min_axles: 3,
            },
            known: None,
            strict: true,
        }
    }

    /// Census classes 0–15 minus the small-vehicle and error classes.
    pub fn caltrans() -> Self {
        let known: Vec<String> = (0..=15).map(|c| c.to_string()).collect();
        ClassFilter {
            rule: ClassRule::Deny(set(&["0", "2", "3", "4", "15"])),
            known: Some(known.into_iter().collect()),
            strict: true,
        }
    }

    /// `Ok(None)` for an unknown code in non-strict mode (record dropped).
    pub fn keeps(&self, code: Option<&str>) -> Result<Option<bool>, CountsError> {
        if self.rule == ClassRule::Any && self.known.is_none() {
            return Ok(Some(true));
        }
        let unknown = |c: &str| {
            if self.strict {
                Err(CountsError::UnknownClass(c.to_string()))
            } else {
                Ok(None)
            }
        };
        let Some(code) = code else {
            return unknown("<missing>");
        };
        if let Some(known) = &self.known {
            if !known.contains(code) {
                return unknown(code);
            }
        }
        match &self.rule {
            ClassRule::Any => Ok(Some(true)),
            ClassRule::Allow(s) => Ok(Some(s.contains(code))),
            ClassRule::Deny(s) => Ok(Some(!s.contains(code))),
            ClassRule::HeightAxles {
                require_high,
                min_axles,
            } => match parse_height_axles(code) {
                Some((high, axles)) => Ok(Some((high || !require_high) && axles >= *min_axles)),
                None => unknown(code),
            },
        }
    }
}

fn parse_height_axles(code: &str) -> Option<(bool, u32)> {
    let mut chars = code.chars();
    let high = match chars.next()?.to_ascii_uppercase() {
        'H' => true,
        'L' => false,
        _ => return None,
    };
    let axles = chars.as_str().parse().ok()?;
    Some((high, axles))
}

pub trait HasVehicleClass {
    fn vehicle_class(&self) -> Option<&str>;
}

impl HasVehicleClass for TollTrip {
    fn vehicle_class(&self) -> Option<&str> {
        Some(&self.vehicle_class)
    }
}

impl HasVehicleClass for HourlyCount {
    fn vehicle_class(&self) -> Option<&str> {
        self.vehicle_class.as_deref()
    }
}

pub fn filter_truck_classes<T: HasVehicleClass + Clone>(
    records: &[T],
    filter: &ClassFilter,
) -> Result<Vec<T>, CountsError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if filter.keeps(r.vehicle_class())? == Some(true) {
            out.push(r.clone());
        }
    }
    Ok(out)
}
