//! Relative value iteration for the average-cost Bellman equation.
//!
//! Each sweep computes `T V(s) = min_a [ A(s) + E V(s') ]`, measures the
//! difference `T V - V`, and re-anchors the table so that the reference state
//! (index 0) has value zero. The span `max(TV - V) - min(TV - V)` brackets the
//! optimal average cost; iteration stops once it is at most `tol` and the
//! midpoint of the bracket is reported as `rho`.
//!
//! Because the kernel factors into a deterministic successor core and an
//! i.i.d. channel draw, every sweep first averages `V` over each core's channel
//! block. After that a Q-value costs one lookup, and that lookup is what
//! [`SolveReport::q_evaluations`] counts.
//!
//! The stage cost does not depend on the action, so argmins are taken over
//! continuation values alone. Ties go to the earliest action in the model's
//! action order.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{transition_distribution, Action, FactoredMdp, State, TransitionModel};

/// Index of the state pinned to zero relative value.
pub const REFERENCE_STATE: usize = 0;

/// Human-readable form of the tie-break rule, recorded in artifacts.
pub const TIE_BREAK: &str = "IH<SH<IT<ST";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    PlainVia,
    StructuredVia,
    Baseline,
    External,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::PlainVia => "plain_rvia",
            Provenance::StructuredVia => "structured_rvia",
            Provenance::Baseline => "baseline",
            Provenance::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy<A> {
    pub actions: Vec<A>,
    pub provenance: Provenance,
}

impl<A: Copy> Policy<A> {
    pub fn action(&self, state: usize) -> A {
        self.actions[state]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl Policy<Action> {
    pub fn at(&self, model: &TransitionModel, state: &State) -> Action {
        self.actions[model.space().index(state)]
    }
}

/// Relative values and the average-cost estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    /// Optimal long-run average AoI, in slots.
    pub rho: f64,
    pub iterations: usize,
    pub final_span: f64,
    pub tol: f64,
}

impl ValueTable {
    pub fn converged(&self) -> bool {
        self.final_span <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub q_evaluations: u64,
    pub wall_time: Duration,
    pub converged: bool,
    /// Span of `TV - V` after every sweep.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `alpha` in `(0, 1]` on the true kernel; the remaining mass is a
    /// self-loop. Every policy keeps its stationary distribution, hence its
    /// average cost and the greedy argmin, but periodic chains stop
    /// oscillating. The default 0.5 also makes the final rescaling of the
    /// relative values exact in floating point.
    pub aperiodicity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-6, max_iter: 100_000, aperiodicity: 0.5 }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        SolverConfig { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Solution<A> {
    pub values: ValueTable,
    pub policy: Policy<A>,
    pub report: SolveReport,
}

/// Expected next-slot value for every successor core.
pub(crate) fn continuation<M: FactoredMdp>(model: &M, values: &[f64]) -> Vec<f64> {
    let w = model.channel_weights();
    let k = w.len();
    values
        .par_chunks(k)
        .map(|block| block.iter().zip(w).map(|(v, p)| v * p).sum())
        .collect()
}

/// `Q(s, a) = A + sum_s' P(s'|s,a) V(s')`, enumerating successors explicitly.
pub fn bellman_q(
    state: &State,
    action: Action,
    values: &ValueTable,
    model: &TransitionModel,
) -> Result<f64> {
    let space = model.space();
    let expect: f64 = transition_distribution(state, action, model)?
        .iter()
        .map(|(s, p)| p * values.values[space.index(s)])
        .sum();
    Ok(crate::mdp::stage_cost(state) + expect)
}

/// Q-values of every action at `state` (`None` where infeasible), via the
/// factored kernel.
pub fn q_values<M: FactoredMdp>(model: &M, values: &[f64], state: usize) -> Vec<Option<f64>> {
    let w = model.channel_weights();
    let k = w.len();
    let cost = model.stage_cost(state);
    (0..model.actions().len())
        .map(|a| {
            model.successor_core(state, a).map(|core| {
                cost + values[core * k..(core + 1) * k]
                    .iter()
                    .zip(w)
                    .map(|(v, p)| v * p)
                    .sum::<f64>()
            })
        })
        .collect()
}

/// Full argmin at one state. Returns (continuation, action index, evaluations).
#[inline]
fn argmin_state<M: FactoredMdp>(model: &M, cont: &[f64], s: usize) -> (f64, u8, u64) {
    let mut best = f64::INFINITY;
    let mut best_a = u8::MAX;
    let mut evals = 0;
    for a in 0..model.actions().len() {
        if let Some(core) = model.successor_core(s, a) {
            evals += 1;
            let c = cont[core];
            if c < best {
                best = c;
                best_a = a as u8;
            }
        }
    }
    (best, best_a, evals)
}

fn plain_sweep<M: FactoredMdp>(model: &M, cont: &[f64], out: &mut [f64], act: &mut [u8]) -> u64 {
    out.par_iter_mut()
        .zip(act.par_iter_mut())
        .enumerate()
        .map(|(s, (v, a))| {
            let (c, best, evals) = argmin_state(model, cont, s);
            *v = c;
            *a = best;
            evals
        })
        .sum()
}

/// Shared RVIA driver. `sweep` writes the minimal continuation value and its
/// action for every state; the driver adds the stage cost and the self-loop.
fn run_rvia<M, F>(model: &M, cfg: &SolverConfig, mut sweep: F) -> Result<(ValueTable, Vec<u8>, SolveReport)>
where
    M: FactoredMdp,
    F: FnMut(&[f64], &mut [f64], &mut [u8]) -> u64,
{
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be > 0", cfg.tol)));
    }
    let alpha = cfg.aperiodicity;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("aperiodicity {alpha} must be in (0, 1]")));
    }
    let start = Instant::now();
    let n = model.num_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut actions = vec![0u8; n];
    let mut history = Vec::new();
    let mut evaluations = 0u64;
    let mut rho = f64::NAN;
    let mut span = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let cont = continuation(model, &values);
        evaluations += sweep(&cont, &mut next, &mut actions);
        next.par_iter_mut()
            .zip(values.par_iter())
            .enumerate()
            .for_each(|(s, (t, v))| *t = model.stage_cost(s) + alpha * *t + (1.0 - alpha) * v);

        let (lo, hi) = next
            .par_iter()
            .zip(values.par_iter())
            .map(|(t, v)| (t - v, t - v))
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        span = hi - lo;
        rho = 0.5 * (hi + lo);
        history.push(span);

        let anchor = next[REFERENCE_STATE];
        values
            .par_iter_mut()
            .zip(next.par_iter())
            .for_each(|(v, t)| *v = t - anchor);

        if span <= cfg.tol {
            break;
        }
    }

    // greedy step w.r.t. the final table
    let cont = continuation(model, &values);
    evaluations += sweep(&cont, &mut next, &mut actions);

    let converged = span <= cfg.tol;
    // relative values of the untransformed chain
    if alpha != 1.0 {
        values.par_iter_mut().for_each(|v| *v *= alpha);
    }
    let table = ValueTable {
        values,
        rho,
        iterations,
        final_span: span,
        tol: cfg.tol,
    };
    let report = SolveReport {
        q_evaluations: evaluations,
        wall_time: start.elapsed(),
        converged,
        history,
    };
    Ok((table, actions, report))
}

fn to_policy<M: FactoredMdp>(model: &M, idx: &[u8], provenance: Provenance) -> Policy<M::Action> {
    let acts = model.actions();
    Policy {
        actions: idx.iter().map(|&a| acts[a as usize]).collect(),
        provenance,
    }
}

/// Plain relative value iteration; every sweep evaluates every feasible
/// action at every state.
pub fn relative_value_iteration<M: FactoredMdp>(model: &M, cfg: &SolverConfig) -> Result<Solution<M::Action>> {
    let (values, actions, report) = run_rvia(model, cfg, |cont, out, act| plain_sweep(model, cont, out, act))?;
    Ok(Solution {
        values,
        policy: to_policy(model, &actions, Provenance::PlainVia),
        report,
    })
}

/// Per-state argmin over feasible actions with the fixed tie-break order.
pub fn greedy_policy<M: FactoredMdp>(values: &ValueTable, model: &M) -> Policy<M::Action> {
    let cont = continuation(model, &values.values);
    let idx: Vec<u8> = (0..model.num_states())
        .into_par_iter()
        .map(|s| argmin_state(model, &cont, s).1)
        .collect();
    to_policy(model, &idx, Provenance::PlainVia)
}

const UNDECIDED: u8 = u8::MAX;
const IH: u8 = 0;
const SH: u8 = 1;
const IT: u8 = 2;
const ST: u8 = 3;

/// One sweep that exploits the threshold structure of the optimal policy.
///
/// Work is split into independent slices, one per channel pair `(h, g)`.
/// Inside a slice states are visited with `B` descending, then `A` and `tau`
/// ascending, and an action is inherited without a full argmin when an
/// already-visited neighbour forces it:
///
/// * `A - 1` chose a transmit action: the same action stays optimal, since
///   its continuation does not depend on `A` while harvesting gets worse.
/// * `tau - 1` chose `SH`: its continuation does not depend on `tau` while
///   every alternative gets worse.
/// * `B + 1` chose `IH` and `B + harvest >= b_max`: both states refill to
///   `b_max`, and every alternative is worse at the lower battery.
/// * `B + 1` chose `SH`, `B >= E^S` and `B + harvest >= b_max + E^S`: same
///   argument with the sampling cost.
///
/// When no rule fires, or inherited candidates disagree, the state is
/// evaluated in full.
fn structured_sweep(model: &TransitionModel, cont: &[f64], out: &mut [f64], act: &mut [u8]) -> u64 {
    let space = *model.space();
    let p = model.params();
    let q = model.quantizer();
    let es = p.sampling_cost_quanta;
    let b_max = space.b_max;
    let levels = space.levels;
    let k = space.channel_block();
    let n_cores = space.num_cores();

    let slices: Vec<(Vec<(f64, u8)>, u64)> = (0..k)
        .into_par_iter()
        .map(|chan| {
            let g_level = (chan as u32 % levels) + 1;
            let harvest = q.harvest_quanta(g_level);
            let mut decided = vec![UNDECIDED; n_cores];
            let mut local = vec![(0.0, UNDECIDED); n_cores];
            let mut evals = 0u64;

            for b in (0..=b_max).rev() {
                let refill = u64::from(b) + u64::from(harvest) >= u64::from(b_max);
                let refill_after_sampling =
                    b >= es && u64::from(b) + u64::from(harvest) >= u64::from(b_max) + u64::from(es);
                for aoi in 1..=space.aoi_max {
                    for tau in 1..=space.tau_max {
                        let core = space.core_index(b, aoi, tau);
                        let s = core * k + chan;

                        let mut candidate = UNDECIDED;
                        let mut conflict = false;
                        let mut offer = |a: u8| {
                            if candidate == UNDECIDED {
                                candidate = a;
                            } else if candidate != a {
                                conflict = true;
                            }
                        };
                        if aoi > 1 {
                            let prev = decided[space.core_index(b, aoi - 1, tau)];
                            if prev == IT || prev == ST {
                                offer(prev);
                            }
                        }
                        if tau > 1 && decided[space.core_index(b, aoi, tau - 1)] == SH {
                            offer(SH);
                        }
                        if b < b_max {
                            let prev = decided[space.core_index(b + 1, aoi, tau)];
                            if prev == IH && refill {
                                offer(IH);
                            } else if prev == SH && refill_after_sampling {
                                offer(SH);
                            }
                        }

                        let inherited = (!conflict && candidate != UNDECIDED)
                            .then(|| model.successor_core(s, candidate as usize).map(|c| (c, candidate)))
                            .flatten();
                        let (c, a) = match inherited {
                            Some((succ, a)) => {
                                evals += 1;
                                (cont[succ], a)
                            }
                            None => {
                                let (c, a, e) = argmin_state(model, cont, s);
                                evals += e;
                                (c, a)
                            }
                        };
                        decided[core] = a;
                        local[core] = (c, a);
                    }
                }
            }
            (local, evals)
        })
        .collect();

    let mut total = 0;
    for (chan, (local, evals)) in slices.into_iter().enumerate() {
        total += evals;
        for (core, (v, a)) in local.into_iter().enumerate() {
            out[core * k + chan] = v;
            act[core * k + chan] = a;
        }
    }
    total
}

/// Relative value iteration whose policy-improvement step skips the full
/// argmin wherever the threshold structure already determines the action.
///
/// Produces the same iterates as [`relative_value_iteration`] with fewer
/// Q-evaluations.
pub fn structured_value_iteration(model: &TransitionModel, cfg: &SolverConfig) -> Result<Solution<Action>> {
    let (values, actions, report) =
        run_rvia(model, cfg, |cont, out, act| structured_sweep(model, cont, out, act))?;
    Ok(Solution {
        values,
        policy: to_policy(model, &actions, Provenance::StructuredVia),
        report,
    })
}
