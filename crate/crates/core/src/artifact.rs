//! CSV artifacts for solved tables, policies and policy grids.
//!
//! Every artifact starts with `# key=value` metadata lines. `params_hash`
//! ties an artifact to the configuration that produced it; readers refuse a
//! mismatch. Floats are written with `{:?}` so they round-trip exactly, and
//! nothing time-dependent is recorded, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{Action, State, TransitionModel, INDEX_LAYOUT};
use crate::solver::{Policy, Provenance, Solution, ValueTable, TIE_BREAK};
use crate::structure::Variable;

/// Parsed `# key=value` metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header(pub BTreeMap<String, String>);

impl Header {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.get(key).ok_or_else(|| artifact_err(path, format!("missing header field {key}")))
    }

    pub fn params_hash(&self) -> Option<&str> {
        self.get("params_hash")
    }
}

fn artifact_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Artifact { path: path.to_path_buf(), msg: msg.into() }
}

fn write_header(out: &mut String, kind: &str, model: &TransitionModel, sol_meta: &[(&str, String)]) {
    let _ = writeln!(out, "# kind={kind}");
    let _ = writeln!(out, "# params_hash={}", model.params().params_hash());
    let _ = writeln!(out, "# layout={INDEX_LAYOUT}");
    let _ = writeln!(out, "# tie_break={TIE_BREAK}");
    for (k, v) in sol_meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn solution_meta(sol: &Solution<Action>) -> Vec<(&'static str, String)> {
    vec![
        ("tol", format!("{:?}", sol.values.tol)),
        ("rho", format!("{:?}", sol.values.rho)),
        ("iterations", sol.values.iterations.to_string()),
        ("final_span", format!("{:?}", sol.values.final_span)),
        ("provenance", sol.policy.provenance.as_str().to_string()),
    ]
}

fn state_cells(s: &State) -> String {
    format!("{},{},{},{},{}", s.battery, s.aoi, s.tau, s.h_level, s.g_level)
}

pub fn values_csv(sol: &Solution<Action>, model: &TransitionModel) -> String {
    let mut out = String::new();
    write_header(&mut out, "values", model, &solution_meta(sol));
    out.push_str("index,battery,aoi,tau,h,g,value\n");
    for (i, s) in model.space().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{:?}", state_cells(&s), sol.values.values[i]);
    }
    out
}

pub fn policy_csv(sol: &Solution<Action>, model: &TransitionModel) -> String {
    let mut out = String::new();
    write_header(&mut out, "policy", model, &solution_meta(sol));
    out.push_str("index,battery,aoi,tau,h,g,action\n");
    for (i, s) in model.space().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", state_cells(&s), sol.policy.actions[i]);
    }
    out
}

/// Solver statistics. Wall time is left out on purpose.
pub fn report_text(sol: &Solution<Action>, model: &TransitionModel) -> String {
    let mut out = String::new();
    write_header(&mut out, "report", model, &solution_meta(sol));
    let _ = writeln!(out, "converged={}", sol.report.converged);
    let _ = writeln!(out, "q_evaluations={}", sol.report.q_evaluations);
    let _ = writeln!(out, "states={}", model.space().len());
    out
}

/// Splits `text` into its header and the data lines after the column row.
fn split(text: &str, path: &Path, columns: &str) -> Result<(Header, Vec<String>)> {
    let mut header = Header::default();
    let mut lines = text.lines();
    let mut saw_columns = false;
    for line in lines.by_ref() {
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                header.0.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line != columns {
            return Err(artifact_err(path, format!("expected column row {columns:?}, found {line:?}")));
        }
        saw_columns = true;
        break;
    }
    if !saw_columns {
        return Err(artifact_err(path, "no column row"));
    }
    Ok((header, lines.map(str::to_string).collect()))
}

fn check_hash(header: &Header, model: &TransitionModel, path: &Path) -> Result<()> {
    let want = model.params().params_hash();
    let got = header.require("params_hash", path)?;
    if got != want {
        return Err(artifact_err(path, format!("params_hash {got} does not match the configuration ({want})")));
    }
    if header.require("layout", path)? != INDEX_LAYOUT {
        return Err(artifact_err(path, "unknown state layout"));
    }
    Ok(())
}

fn rows<'a>(lines: &'a [String], model: &TransitionModel, path: &Path) -> Result<Vec<&'a str>> {
    let n = model.space().len();
    if lines.len() != n {
        return Err(artifact_err(path, format!("expected {n} rows, found {}", lines.len())));
    }
    let mut last = Vec::with_capacity(n);
    for (i, (line, s)) in lines.iter().zip(model.space().iter()).enumerate() {
        let want = format!("{i},{},", state_cells(&s));
        let rest = line
            .strip_prefix(&want)
            .ok_or_else(|| artifact_err(path, format!("row {i} does not describe state {s}")))?;
        last.push(rest);
    }
    Ok(last)
}

fn parse_f64(s: &str, path: &Path, what: &str) -> Result<f64> {
    s.parse().map_err(|_| artifact_err(path, format!("bad {what} {s:?}")))
}

pub fn read_values(path: &Path, model: &TransitionModel) -> Result<ValueTable> {
    let text = fs::read_to_string(path)?;
    let (h, lines) = split(&text, path, "index,battery,aoi,tau,h,g,value")?;
    check_hash(&h, model, path)?;
    let values = rows(&lines, model, path)?
        .into_iter()
        .map(|v| parse_f64(v, path, "value"))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValueTable {
        values,
        rho: parse_f64(h.require("rho", path)?, path, "rho")?,
        iterations: h
            .require("iterations", path)?
            .parse()
            .map_err(|_| artifact_err(path, "bad iterations"))?,
        final_span: parse_f64(h.require("final_span", path)?, path, "final_span")?,
        tol: parse_f64(h.require("tol", path)?, path, "tol")?,
    })
}

pub fn read_policy(path: &Path, model: &TransitionModel) -> Result<(Header, Policy<Action>)> {
    let text = fs::read_to_string(path)?;
    let (h, lines) = split(&text, path, "index,battery,aoi,tau,h,g,action")?;
    check_hash(&h, model, path)?;
    let actions = rows(&lines, model, path)?
        .into_iter()
        .map(|a| a.parse::<Action>().map_err(|_| artifact_err(path, format!("bad action {a:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let provenance = match h.get("provenance") {
        Some("plain_rvia") => Provenance::PlainVia,
        Some("structured_rvia") => Provenance::StructuredVia,
        Some("baseline") => Provenance::Baseline,
        _ => Provenance::External,
    };
    Ok((h, Policy { actions, provenance }))
}

/// Fixed coordinates of a policy grid; the unfixed ones become axes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceSpec {
    pub fixed: Vec<(Variable, u32)>,
}

impl SliceSpec {
    /// Parses `VAR=LEVEL,...`, e.g. `B=5,g=5,h=5`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut fixed: Vec<(Variable, u32)> = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, level) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("slice entry {part:?} is not VAR=LEVEL")))?;
            let var = Variable::parse(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown slice variable {name:?}")))?;
            let level: u32 = level
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("slice level {level:?} is not an integer")))?;
            if fixed.iter().any(|(v, _)| *v == var) {
                return Err(Error::InvalidArgument(format!("slice fixes {var} twice")));
            }
            fixed.push((var, level));
        }
        Ok(SliceSpec { fixed })
    }

    pub fn free(&self) -> Vec<Variable> {
        Variable::ALL.into_iter().filter(|v| !self.fixed.iter().any(|(f, _)| f == v)).collect()
    }

    fn validate(&self, model: &TransitionModel) -> Result<()> {
        for (var, level) in &self.fixed {
            let (lo, hi) = var.range(model);
            if *level < lo || *level > hi {
                return Err(Error::InvalidArgument(format!("{var}={level} is outside {lo}..={hi}")));
            }
        }
        if self.free().len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "a grid has at most two free variables; fix all but two of {:?}",
                self.free().iter().map(|v| v.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }
}

/// Action grid over the free variables of `slice`: rows follow the first
/// free variable (in battery, aoi, tau, h, g order) and columns the second.
/// A missing axis is written as `-`.
pub fn policy_grid_csv(policy: &Policy<Action>, model: &TransitionModel, slice: &SliceSpec) -> Result<String> {
    slice.validate(model)?;
    let free = slice.free();
    let axis = |k: usize| -> (Option<Variable>, Vec<u32>) {
        match free.get(k) {
            Some(&v) => {
                let (lo, hi) = v.range(model);
                (Some(v), (lo..=hi).collect())
            }
            None => (None, vec![0]),
        }
    };
    let (row_var, row_vals) = axis(0);
    let (col_var, col_vals) = axis(1);
    let name = |v: Option<Variable>| v.map_or("-", Variable::name);
    let label = |v: Option<Variable>, x: u32| if v.is_some() { x.to_string() } else { "-".into() };

    let mut base = State::new(0, 1, 1, 1, 1);
    for (var, level) in &slice.fixed {
        var.set(&mut base, *level);
    }
    let mut out = String::new();
    let _ = writeln!(out, "# kind=policy_grid");
    let _ = writeln!(out, "# params_hash={}", model.params().params_hash());
    let fixed: Vec<String> = slice.fixed.iter().map(|(v, l)| format!("{}={l}", v.name())).collect();
    let _ = writeln!(out, "# slice={}", fixed.join(","));
    let _ = writeln!(out, "# provenance={}", policy.provenance.as_str());
    let _ = write!(out, "{}\\{}", name(row_var), name(col_var));
    for &c in &col_vals {
        let _ = write!(out, ",{}", label(col_var, c));
    }
    out.push('\n');
    for &r in &row_vals {
        let _ = write!(out, "{}", label(row_var, r));
        for &c in &col_vals {
            let mut s = base;
            if let Some(v) = row_var {
                v.set(&mut s, r);
            }
            if let Some(v) = col_var {
                v.set(&mut s, c);
            }
            let _ = write!(out, ",{}", policy.at(model, &s));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;
    use crate::solver::{relative_value_iteration, SolverConfig};

    fn small() -> TransitionModel {
        let mut p = SystemParams::reference(1);
        p.battery_levels = 4;
        p.aoi_max = 3;
        p.tau_max = 3;
        p.channel_levels = 2;
        TransitionModel::new(p).unwrap()
    }

    #[test]
    fn round_trip_values_and_policy() {
        let m = small();
        let sol = relative_value_iteration(&m, &SolverConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_artifact(dir.path(), "values.csv", &values_csv(&sol, &m)).unwrap();
        write_artifact(dir.path(), "policy.csv", &policy_csv(&sol, &m)).unwrap();
        let v = read_values(&dir.path().join("values.csv"), &m).unwrap();
        assert_eq!(v, sol.values);
        let (h, p) = read_policy(&dir.path().join("policy.csv"), &m).unwrap();
        assert_eq!(p, sol.policy);
        assert_eq!(h.get("tie_break"), Some(TIE_BREAK));
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let m = small();
        let sol = relative_value_iteration(&m, &SolverConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_artifact(dir.path(), "policy.csv", &policy_csv(&sol, &m)).unwrap();
        let mut p = m.params().clone();
        p.packet_bits += 1.0;
        let other = TransitionModel::new(p).unwrap();
        let err = read_policy(&dir.path().join("policy.csv"), &other).unwrap_err();
        assert!(err.to_string().contains("params_hash"), "{err}");
    }

    #[test]
    fn grid_shapes() {
        let m = small();
        let sol = relative_value_iteration(&m, &SolverConfig::default()).unwrap();
        let grid = policy_grid_csv(&sol.policy, &m, &SliceSpec::parse("B=2,h=1,g=2").unwrap()).unwrap();
        let body: Vec<&str> = grid.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body[0], "aoi\\tau,1,2,3");
        assert_eq!(body.len(), 4);
        let cell = policy_grid_csv(&sol.policy, &m, &SliceSpec::parse("B=2,A=1,tau=1,h=1,g=2").unwrap()).unwrap();
        let body: Vec<&str> = cell.lines().filter(|l| !l.starts_with('#')).collect();
        let want = sol.policy.at(&m, &State::new(2, 1, 1, 1, 2)).to_string();
        assert_eq!(body, vec!["-\\-,-".to_string(), format!("-,{want}")]);
    }

    #[test]
    fn bad_slices() {
        let m = small();
        let pol = Policy { actions: vec![Action::IH; m.space().len()], provenance: Provenance::External };
        for spec in ["B=9,h=1,g=1", "B=1", "x=1", "B=1,B=2", "B"] {
            let r = SliceSpec::parse(spec).and_then(|s| policy_grid_csv(&pol, &m, &s));
            assert!(r.is_err(), "{spec}");
        }
    }
}
