use serde::{Deserialize, Serialize};

use super::expr::{self, Scope};
use super::{frequency, EventLog, LogError, Owner, Trace};

const MILLIS_PER_HOUR: f64 = 3_600_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiKind {
    /// Interest earned on accepted offers minus the cost of working time.
    LoanProfit,
    /// Arithmetic expression over trace attributes, see [`KpiSpec::expression`].
    Custom,
}

/// How working time is measured on a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkingTime {
    /// Per-event duration attribute in hours; takes precedence when present.
    pub duration_attribute: Option<String>,
    /// Cap on the gap to the next event when no duration is recorded.
    pub idle_cap_hours: f64,
    /// Count only agent-owned events.
    pub agent_only: bool,
}

impl Default for WorkingTime {
    fn default() -> Self {
        WorkingTime {
            duration_attribute: Some("duration".into()),
            idle_cap_hours: 8.0,
            agent_only: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpiSpec {
    pub kind: KpiKind,
    pub interest_rate: f64,
    /// Currency per working hour.
    pub labor_cost: f64,
    pub amount_attribute: String,
    /// Presence of this activity marks an accepted offer.
    pub accept_activity: String,
    pub working_time: WorkingTime,
    /// Used when `kind` is `custom`. Identifiers: `hours`, `accepted`,
    /// `events`, `interest_rate`, `labor_cost` and any numeric trace
    /// attribute; functions `count("label")` and `has("label")`.
    pub expression: Option<String>,
}

impl Default for KpiSpec {
    fn default() -> Self {
        KpiSpec {
            kind: KpiKind::LoanProfit,
            interest_rate: 0.15,
            labor_cost: 36.0,
            amount_attribute: "amount".into(),
            accept_activity: "accept_offer".into(),
            working_time: WorkingTime::default(),
            expression: None,
        }
    }
}

impl KpiSpec {
    pub fn validate(&self) -> Result<(), LogError> {
        let non_negative = |x: f64| x >= 0.0;
        if !non_negative(self.interest_rate) || !non_negative(self.labor_cost) {
            return Err(LogError::InvalidKpi(
                "interest_rate and labor_cost must be non-negative".into(),
            ));
        }
        if self.kind == KpiKind::Custom {
            let src = self
                .expression
                .as_deref()
                .ok_or_else(|| LogError::InvalidKpi("custom KPI needs an expression".into()))?;
            expr::parse(src).map_err(LogError::InvalidKpi)?;
        }
        Ok(())
    }

    /// KPI of one complete trace.
    pub fn reward(&self, trace: &Trace) -> Result<f64, LogError> {
        let hours = working_hours(trace, &self.working_time);
        let accepted = trace.activities().any(|a| a == self.accept_activity);
        match self.kind {
            KpiKind::LoanProfit => {
                let profit = if accepted {
                    let amount = trace
                        .attribute(&self.amount_attribute)
                        .ok_or_else(|| LogError::MissingAttribute {
                            case_id: trace.case_id.clone(),
                            attribute: self.amount_attribute.clone(),
                        })?;
                    self.interest_rate * amount
                } else {
                    0.0
                };
                Ok(profit - self.labor_cost * hours)
            }
            KpiKind::Custom => {
                let src = self.expression.as_deref().unwrap_or("0");
                let e = expr::parse(src).map_err(LogError::InvalidKpi)?;
                let scope = TraceScope {
                    trace,
                    spec: self,
                    hours,
                    accepted,
                };
                e.eval(&scope).map_err(|attribute| LogError::MissingAttribute {
                    case_id: trace.case_id.clone(),
                    attribute,
                })
            }
        }
    }
}

struct TraceScope<'a> {
    trace: &'a Trace,
    spec: &'a KpiSpec,
    hours: f64,
    accepted: bool,
}

impl Scope for TraceScope<'_> {
    fn var(&self, name: &str) -> Option<f64> {
        match name {
            "hours" => Some(self.hours),
            "accepted" => Some(f64::from(u8::from(self.accepted))),
            "events" => Some(self.trace.len() as f64),
            "interest_rate" => Some(self.spec.interest_rate),
            "labor_cost" => Some(self.spec.labor_cost),
            other => self.trace.attribute(other),
        }
    }

    fn count(&self, activity: &str) -> usize {
        frequency(&self.trace.events, activity)
    }
}

/// Working hours charged to a trace.
///
/// Each counted event contributes its duration attribute if it has one,
/// otherwise the gap to the next event capped at `idle_cap_hours` (the last
/// event contributes nothing in that case).
pub fn working_hours(trace: &Trace, wt: &WorkingTime) -> f64 {
    let mut total = 0.0;
    for (i, event) in trace.events.iter().enumerate() {
        if wt.agent_only && event.owner != Owner::Agent {
            continue;
        }
        let recorded = wt
            .duration_attribute
            .as_deref()
            .and_then(|name| event.payload.get(name))
            .and_then(|v| v.as_f64());
        total += match recorded {
            Some(h) => h,
            None => trace.events.get(i + 1).map_or(0.0, |next| {
                ((next.timestamp - event.timestamp) as f64 / MILLIS_PER_HOUR).clamp(0.0, wt.idle_cap_hours)
            }),
        };
    }
    total
}

/// Re-tags owners and sets every trace's reward from the KPI.
pub fn enrich(log: &EventLog, kpi: &KpiSpec) -> Result<EventLog, LogError> {
    kpi.validate()?;
    let mut out = log.with_traces(log.traces().to_vec());
    for trace in &mut out.traces {
        trace.reward = kpi.reward(trace)?;
    }
    Ok(out)
}
