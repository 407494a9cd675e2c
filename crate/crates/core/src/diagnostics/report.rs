use serde::Serialize;

use crate::problem::{NoiseLevel, Observation};

/// Additive slack granted to every inequality, relative to its natural scale.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inapplicable,
}

/// One certified inequality. `margin` is the slack in the direction of the
/// inequality, so it is non-negative whenever the inequality holds exactly.
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub check: String,
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckEntry {
    /// `lhs <= rhs`, passing with slack `CHECK_TOL * scale`.
    pub fn at_most(check: &str, anchor: &str, lhs: f64, rhs: f64, scale: f64) -> Self {
        let margin = rhs - lhs;
        let ok = lhs <= rhs + CHECK_TOL * scale.abs();
        CheckEntry::new(check, anchor, lhs, rhs, margin, ok)
    }

    /// `lhs >= rhs`, passing with slack `CHECK_TOL * scale`.
    pub fn at_least(check: &str, anchor: &str, lhs: f64, rhs: f64, scale: f64) -> Self {
        let margin = lhs - rhs;
        let ok = lhs >= rhs - CHECK_TOL * scale.abs();
        CheckEntry::new(check, anchor, lhs, rhs, margin, ok)
    }

    pub fn inapplicable(check: &str, anchor: &str, why: impl Into<String>) -> Self {
        CheckEntry {
            check: check.into(),
            anchor: anchor.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            status: Status::Inapplicable,
            note: Some(why.into()),
        }
    }

    fn new(check: &str, anchor: &str, lhs: f64, rhs: f64, margin: f64, ok: bool) -> Self {
        let ok = ok && lhs.is_finite() && rhs.is_finite();
        CheckEntry {
            check: check.into(),
            anchor: anchor.into(),
            lhs,
            rhs,
            margin,
            status: if ok { Status::Pass } else { Status::Fail },
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks an otherwise computed entry inapplicable, keeping its numbers.
    pub fn demote(mut self, why: impl Into<String>) -> Self {
        self.status = Status::Inapplicable;
        self.note = Some(why.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Worst entry (smallest margin) of a family, annotated with the count.
pub fn worst_of(entries: Vec<CheckEntry>, check: &str, anchor: &str) -> CheckEntry {
    let total = entries.len();
    let applicable: Vec<CheckEntry> =
        entries.into_iter().filter(|e| e.status != Status::Inapplicable).collect();
    if applicable.is_empty() {
        return CheckEntry::inapplicable(check, anchor, format!("none of {total} cases applicable"));
    }
    let failed = applicable.iter().filter(|e| e.status == Status::Fail).count();
    let count = applicable.len();
    let mut worst = applicable
        .into_iter()
        .min_by(|a, b| {
            // failures first, then the smallest margin
            (a.status == Status::Pass)
                .cmp(&(b.status == Status::Pass))
                .then(a.margin.total_cmp(&b.margin))
        })
        .expect("non-empty");
    worst.check = check.into();
    worst.anchor = anchor.into();
    worst.note = Some(format!("worst of {count} applicable cases ({total} total), {failed} failed"));
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceMeta {
    pub n: usize,
    pub d: usize,
    pub sigma: NoiseLevel,
    pub seed: u64,
    pub op_norm_delta: Option<f64>,
    pub delta_gstar_inf: Option<f64>,
}

impl InstanceMeta {
    pub fn of(obs: &Observation) -> Self {
        InstanceMeta {
            n: obs.n,
            d: obs.d,
            sigma: obs.level,
            seed: obs.seed,
            op_norm_delta: obs.stats.map(|s| s.op_norm_delta),
            delta_gstar_inf: obs.stats.map(|s| s.delta_gstar_inf),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub instance: InstanceMeta,
    pub checks: Vec<CheckEntry>,
}

impl CertReport {
    pub fn new(instance: InstanceMeta) -> Self {
        CertReport { instance, checks: Vec::new() }
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = CheckEntry>) {
        self.checks.extend(entries);
    }

    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn count(&self, status: Status) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
