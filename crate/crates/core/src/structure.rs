//! Exhaustive checks of the value-function monotonicity and of the four
//! threshold properties of an optimal policy, plus threshold extraction.
//!
//! Monotonicity: `V` is nondecreasing in `A` and `tau` and nonincreasing in
//! `B`, `h` and `g`. It is checked on every adjacent pair with slack
//! `10 * tol`.
//!
//! Threshold properties, for `s1`, `s2` differing in one coordinate:
//!
//! * (i) `B1 >= B2 >= b_max - harvest(g)`: `IH` at `s1` implies `IH` at `s2`.
//! * (ii) `B1 >= B2 >= b_max - harvest(g) + E^S`: `(a1, H)` at `s1` implies
//!   `(a1, H)` at `s2`, provided `(a1, H)` is affordable at `s2`.
//! * (iii) `A2 >= A1`: `(a1, T)` at `s1` implies `(a1, T)` at `s2`.
//! * (iv) `tau2 >= tau1`: `(S, a2)` at `s1` implies `(S, a2)` at `s2`.
//!
//! Argmin ties make the optimal policy non-unique. When values are supplied,
//! a failed exact implication is downgraded (and recorded) rather than
//! flagged when the expected action and the chosen one are both co-optimal
//! at `s2`.
//!
//! For (iii) and (iv) the family (`(., T)` resp. `(S, .)`) is what must
//! persist. A strict switch inside the family, for example `ST` at small
//! `tau` and `SH` at large `tau`, is reported in `member_mismatches` and does
//! not fail the check: transmitting a packet of age `tau` costs more as
//! `tau` grows while harvesting does not, so the member can legitimately
//! change.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::mdp::{Action, State, TransitionModel};
use crate::solver::{q_values, Policy, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Battery,
    Aoi,
    Tau,
    HLevel,
    GLevel,
}

impl Variable {
    pub const ALL: [Variable; 5] =
        [Variable::Battery, Variable::Aoi, Variable::Tau, Variable::HLevel, Variable::GLevel];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Battery => "battery",
            Variable::Aoi => "aoi",
            Variable::Tau => "tau",
            Variable::HLevel => "h",
            Variable::GLevel => "g",
        }
    }

    /// Accepts the long names and the usual symbols (`B`, `A`).
    pub fn parse(s: &str) -> Option<Variable> {
        match s.trim() {
            "battery" | "B" | "b" => Some(Variable::Battery),
            "aoi" | "A" | "a" => Some(Variable::Aoi),
            "tau" | "t" => Some(Variable::Tau),
            "h" | "h_level" => Some(Variable::HLevel),
            "g" | "g_level" => Some(Variable::GLevel),
            _ => None,
        }
    }

    pub fn get(self, s: &State) -> u32 {
        match self {
            Variable::Battery => s.battery,
            Variable::Aoi => s.aoi,
            Variable::Tau => s.tau,
            Variable::HLevel => s.h_level,
            Variable::GLevel => s.g_level,
        }
    }

    pub fn set(self, s: &mut State, v: u32) {
        match self {
            Variable::Battery => s.battery = v,
            Variable::Aoi => s.aoi = v,
            Variable::Tau => s.tau = v,
            Variable::HLevel => s.h_level = v,
            Variable::GLevel => s.g_level = v,
        }
    }

    /// Inclusive range of the variable in `model`.
    pub fn range(self, model: &TransitionModel) -> (u32, u32) {
        let sp = model.space();
        match self {
            Variable::Battery => (0, sp.b_max),
            Variable::Aoi => (1, sp.aoi_max),
            Variable::Tau => (1, sp.tau_max),
            Variable::HLevel | Variable::GLevel => (1, sp.levels),
        }
    }

    /// `true` when V must be nondecreasing along this variable.
    fn value_grows(self) -> bool {
        matches!(self, Variable::Aoi | Variable::Tau)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdRule {
    I,
    II,
    III,
    IV,
}

impl ThresholdRule {
    pub fn label(self) -> &'static str {
        match self {
            ThresholdRule::I => "i",
            ThresholdRule::II => "ii",
            ThresholdRule::III => "iii",
            ThresholdRule::IV => "iv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    /// `lower` has the smaller value of `variable`.
    pub lower: State,
    pub upper: State,
    pub variable: Variable,
    pub v_lower: f64,
    pub v_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdViolation {
    pub part: ThresholdRule,
    pub s1: State,
    pub s2: State,
    pub action_s1: Action,
    pub action_s2: Action,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureReport {
    pub monotonicity_violations: Vec<MonotonicityViolation>,
    pub threshold_violations: Vec<ThresholdViolation>,
    /// Implications that failed exactly but hold up to an argmin tie.
    pub tie_downgrades: Vec<ThresholdViolation>,
    /// (iii)/(iv) pairs that keep the family but strictly switch member.
    pub member_mismatches: Vec<ThresholdViolation>,
    pub pairs_checked: u64,
    pub thresholds: Option<ThresholdTables>,
}

impl StructureReport {
    pub fn pass(&self) -> bool {
        self.monotonicity_violations.is_empty() && self.threshold_violations.is_empty()
    }

    pub fn merge(mut self, other: StructureReport) -> StructureReport {
        self.monotonicity_violations.extend(other.monotonicity_violations);
        self.threshold_violations.extend(other.threshold_violations);
        self.tie_downgrades.extend(other.tie_downgrades);
        self.member_mismatches.extend(other.member_mismatches);
        self.pairs_checked += other.pairs_checked;
        if other.thresholds.is_some() {
            self.thresholds = other.thresholds;
        }
        self
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "structure check: {}", if self.pass() { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "pairs checked: {}", self.pairs_checked);
        let _ = writeln!(s, "value monotonicity violations: {}", self.monotonicity_violations.len());
        for part in [ThresholdRule::I, ThresholdRule::II, ThresholdRule::III, ThresholdRule::IV] {
            let n = self.threshold_violations.iter().filter(|v| v.part == part).count();
            let t = self.tie_downgrades.iter().filter(|v| v.part == part).count();
            let m = self.member_mismatches.iter().filter(|v| v.part == part).count();
            let _ = writeln!(
                s,
                "threshold part ({}): {n} violations, {t} tie downgrades, {m} in-family switches",
                part.label()
            );
        }
        if let Some(t) = &self.thresholds {
            let _ = writeln!(s, "threshold rows: {}", t.rows.len());
        }
        s
    }

    /// One row per violation; header only when the check passed.
    pub fn violations_csv(&self) -> String {
        let mut s = String::from("kind,detail,s1,s2,a1_or_v1,a2_or_v2\n");
        for v in &self.monotonicity_violations {
            let _ = writeln!(
                s,
                "monotonicity,{},\"{}\",\"{}\",{:?},{:?}",
                v.variable, v.lower, v.upper, v.v_lower, v.v_upper
            );
        }
        for v in &self.threshold_violations {
            let _ = writeln!(
                s,
                "threshold,{},\"{}\",\"{}\",{},{}",
                v.part.label(),
                v.s1,
                v.s2,
                v.action_s1,
                v.action_s2
            );
        }
        s
    }
}

/// Checks that `V` is monotone along every coordinate on adjacent pairs.
///
/// Refuses a table whose solve did not converge.
pub fn check_value_monotonicity(values: &ValueTable, model: &TransitionModel) -> Result<StructureReport> {
    if !values.converged() {
        return Err(Error::NotConverged { span: values.final_span, tol: values.tol });
    }
    let slack = 10.0 * values.tol;
    let space = model.space();
    let mut report = StructureReport::default();
    for s in space.iter() {
        let v = values.values[space.index(&s)];
        for var in Variable::ALL {
            let (_, hi) = var.range(model);
            if var.get(&s) >= hi {
                continue;
            }
            let mut up = s;
            var.set(&mut up, var.get(&s) + 1);
            let vu = values.values[space.index(&up)];
            report.pairs_checked += 1;
            let bad = if var.value_grows() { v > vu + slack } else { vu > v + slack };
            if bad {
                report.monotonicity_violations.push(MonotonicityViolation {
                    lower: s,
                    upper: up,
                    variable: var,
                    v_lower: v,
                    v_upper: vu,
                });
            }
        }
    }
    Ok(report)
}

struct TieOracle<'a> {
    model: &'a TransitionModel,
    values: &'a ValueTable,
    slack: f64,
}

impl TieOracle<'_> {
    fn co_optimal(&self, s: &State, a: Action) -> bool {
        let q = q_values(self.model, &self.values.values, self.model.space().index(s));
        let best = q.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
        matches!(q[a.index()], Some(v) if v <= best + self.slack)
    }
}

fn family(part: ThresholdRule, a: Action) -> bool {
    match part {
        ThresholdRule::III => a.transmits(),
        ThresholdRule::IV => a.samples(),
        _ => false,
    }
}

/// Verifies the four threshold implications over every qualifying pair.
///
/// With `values`, failures explained by argmin ties are downgraded; without,
/// every exact mismatch counts as a violation.
pub fn check_threshold_structure(
    policy: &Policy<Action>,
    model: &TransitionModel,
    values: Option<&ValueTable>,
) -> StructureReport {
    let space = model.space();
    let q = model.quantizer();
    let b_max = i64::from(space.b_max);
    let es = i64::from(model.params().sampling_cost_quanta);
    let ties = values.map(|v| TieOracle { model, values: v, slack: 10.0 * v.tol });
    let mut report = StructureReport::default();

    let judge = |part: ThresholdRule, s1: State, s2: State, a1: Action, report: &mut StructureReport| {
        report.pairs_checked += 1;
        let a2 = policy.at(model, &s2);
        if a2 == a1 {
            return;
        }
        let record = ThresholdViolation { part, s1, s2, action_s1: a1, action_s2: a2 };
        if let Some(t) = &ties {
            let tied = t.co_optimal(&s2, a1) && t.co_optimal(&s2, a2);
            if tied {
                report.tie_downgrades.push(record);
                return;
            }
        }
        if family(part, a1) && family(part, a2) {
            report.member_mismatches.push(record);
            return;
        }
        report.threshold_violations.push(record);
    };

    for s1 in space.iter() {
        let a1 = policy.at(model, &s1);
        let harvest = i64::from(q.harvest_quanta(s1.g_level));

        // (i) and (ii): walk B downwards from B1
        if a1 == Action::IH || a1 == Action::SH {
            for b2 in (0..s1.battery).rev() {
                let b2i = i64::from(b2);
                let s2 = State { battery: b2, ..s1 };
                if a1 == Action::IH && b2i >= b_max - harvest {
                    judge(ThresholdRule::I, s1, s2, a1, &mut report);
                }
                if a1 == Action::SH && b2i >= b_max - harvest + es && b2i >= es {
                    judge(ThresholdRule::II, s1, s2, a1, &mut report);
                }
            }
        }
        if a1.transmits() {
            for aoi in s1.aoi + 1..=space.aoi_max {
                judge(ThresholdRule::III, s1, State { aoi, ..s1 }, a1, &mut report);
            }
        }
        if a1.samples() {
            for tau in s1.tau + 1..=space.tau_max {
                judge(ThresholdRule::IV, s1, State { tau, ..s1 }, a1, &mut report);
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdKind {
    /// Smallest `A` at which a transmit action is chosen.
    Aoi,
    /// Smallest `tau` at which a sampling action is chosen.
    Tau,
    /// Largest `B` with `IH` among `B >= b_max - harvest(g)`.
    BatteryIdleHarvest,
    /// Largest `B` with `SH` among `B >= max(E^S, b_max - harvest(g) + E^S)`.
    BatterySampleHarvest,
}

impl ThresholdKind {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdKind::Aoi => "aoi_th",
            ThresholdKind::Tau => "tau_th",
            ThresholdKind::BatteryIdleHarvest => "battery_th_ih",
            ThresholdKind::BatterySampleHarvest => "battery_th_sh",
        }
    }

    pub fn free_variable(self) -> Variable {
        match self {
            ThresholdKind::Aoi => Variable::Aoi,
            ThresholdKind::Tau => Variable::Tau,
            _ => Variable::Battery,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub kind: ThresholdKind,
    /// The slice; the free coordinate is set to its lowest value and is
    /// meaningless.
    pub slice: State,
    /// `None` encodes "never".
    pub threshold: Option<u32>,
    /// Lowest value of the free coordinate inside the regime (battery kinds).
    pub regime_floor: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThresholdTables {
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdTables {
    pub fn get(&self, kind: ThresholdKind, slice: &State) -> Option<&ThresholdRow> {
        let mut key = *slice;
        let var = kind.free_variable();
        var.set(&mut key, if var == Variable::Battery { 0 } else { 1 });
        self.rows.iter().find(|r| r.kind == kind && r.slice == key)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,battery,aoi,tau,h,g,threshold\n");
        for r in &self.rows {
            let free = r.kind.free_variable();
            let cell = |v: Variable| {
                if v == free { "*".to_string() } else { v.get(&r.slice).to_string() }
            };
            let th = r.threshold.map_or_else(|| "never".to_string(), |t| t.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.kind.name(),
                cell(Variable::Battery),
                cell(Variable::Aoi),
                cell(Variable::Tau),
                cell(Variable::HLevel),
                cell(Variable::GLevel),
                th
            );
        }
        s
    }
}

/// Extracts per-slice thresholds. Refuses when the threshold check fails,
/// since the thresholds are then undefined.
pub fn extract_thresholds(
    policy: &Policy<Action>,
    model: &TransitionModel,
    values: Option<&ValueTable>,
) -> Result<ThresholdTables> {
    if !check_threshold_structure(policy, model, values).pass() {
        return Err(Error::StructureViolated);
    }
    let sp = *model.space();
    let q = model.quantizer();
    let es = model.params().sampling_cost_quanta;
    let mut rows = Vec::new();

    for h in 1..=sp.levels {
        for g in 1..=sp.levels {
            for b in 0..=sp.b_max {
                for tau in 1..=sp.tau_max {
                    let slice = State::new(b, 1, tau, h, g);
                    let threshold = (1..=sp.aoi_max)
                        .find(|&aoi| policy.at(model, &State { aoi, ..slice }).transmits());
                    rows.push(ThresholdRow { kind: ThresholdKind::Aoi, slice, threshold, regime_floor: 1 });
                }
                for aoi in 1..=sp.aoi_max {
                    let slice = State::new(b, aoi, 1, h, g);
                    let threshold = (1..=sp.tau_max)
                        .find(|&tau| policy.at(model, &State { tau, ..slice }).samples());
                    rows.push(ThresholdRow { kind: ThresholdKind::Tau, slice, threshold, regime_floor: 1 });
                }
            }
            let harvest = q.harvest_quanta(g);
            let floor_ih = sp.b_max.saturating_sub(harvest);
            let floor_sh = (sp.b_max.saturating_sub(harvest) + es).max(es).min(sp.b_max + 1);
            for aoi in 1..=sp.aoi_max {
                for tau in 1..=sp.tau_max {
                    let slice = State::new(0, aoi, tau, h, g);
                    for (kind, floor, action) in [
                        (ThresholdKind::BatteryIdleHarvest, floor_ih, Action::IH),
                        (ThresholdKind::BatterySampleHarvest, floor_sh, Action::SH),
                    ] {
                        let threshold = (floor..=sp.b_max)
                            .rev()
                            .find(|&b| policy.at(model, &State { battery: b, ..slice }) == action);
                        rows.push(ThresholdRow { kind, slice, threshold, regime_floor: floor });
                    }
                }
            }
        }
    }
    Ok(ThresholdTables { rows })
}

/// Runs both checks and, on success, attaches the threshold tables.
pub fn verify(values: &ValueTable, policy: &Policy<Action>, model: &TransitionModel) -> Result<StructureReport> {
    let mono = check_value_monotonicity(values, model)?;
    let thr = check_threshold_structure(policy, model, Some(values));
    let mut report = mono.merge(thr);
    if report.pass() {
        report.thresholds = Some(extract_thresholds(policy, model, Some(values))?);
    }
    Ok(report)
}
