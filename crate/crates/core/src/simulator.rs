//! Monte-Carlo rollouts, the generate-at-will baseline and parameter sweeps.
//!
//! Random numbers come from `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(stream)`. Each slot draws the uplink level `h'` and then the
//! downlink level `g'` by inverse CDF on one uniform `f64` each. Inside a
//! sweep, point `i` uses stream `2i` for the joint policy and `2i + 1` for
//! the baseline, all under the same seed.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::ChannelQuantizer;
use crate::error::{Error, Result};
use crate::mdp::{FactoredMdp, TransitionModel};
use crate::params::SystemParams;
use crate::solver::{relative_value_iteration, Policy, Solution, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutConfig {
    /// Measured slots, after burn-in.
    pub n_slots: u64,
    pub burn_in: u64,
    /// Number of batch means behind the confidence interval.
    pub batches: u64,
    pub seed: u64,
    pub stream: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { n_slots: 1_000_000, burn_in: 10_000, batches: 100, seed: 0, stream: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub slots_simulated: u64,
    pub mean_aoi: f64,
    /// 95% batch-means half width.
    pub ci_half_width: f64,
    /// Indexed like `model.actions()`.
    pub action_frequencies: Vec<f64>,
    pub mean_battery: f64,
    pub seed: u64,
}

fn cumulative(marginal: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = marginal
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Simulates `policy` on `model` from state index `initial`.
///
/// Fails if the policy picks an infeasible action at a visited state.
pub fn rollout<M: FactoredMdp>(
    policy: &Policy<M::Action>,
    model: &M,
    initial: usize,
    cfg: &RolloutConfig,
) -> Result<TrajectoryStats> {
    if cfg.n_slots == 0 {
        return Err(Error::InvalidArgument("n_slots must be at least 1".into()));
    }
    if cfg.batches < 2 || cfg.batches > cfg.n_slots {
        return Err(Error::InvalidArgument(format!(
            "batches must lie in 2..={} (got {})",
            cfg.n_slots, cfg.batches
        )));
    }
    if policy.len() != model.num_states() || initial >= model.num_states() {
        return Err(Error::InvalidArgument("policy or initial state does not match the model".into()));
    }
    let actions = model.actions();
    let chosen: Vec<usize> = policy
        .actions
        .iter()
        .map(|a| actions.iter().position(|b| b == a).expect("policy action belongs to the model"))
        .collect();
    let cdf = cumulative(model.channel_marginal());
    let levels = cdf.len();
    let block = model.channel_weights().len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);

    let mut state = initial;
    let step = |state: usize, rng: &mut ChaCha8Rng| -> Result<(usize, usize)> {
        let a = chosen[state];
        let core = model.successor_core(state, a).ok_or_else(|| Error::InfeasibleAction {
            state: model.describe_state(state),
            action: actions[a].to_string(),
        })?;
        let h = draw(&cdf, rng);
        let g = draw(&cdf, rng);
        Ok((a, core * block + h * levels + g))
    };
    for _ in 0..cfg.burn_in {
        state = step(state, &mut rng)?.1;
    }

    let batch_len = cfg.n_slots / cfg.batches;
    let mut batch_means = Vec::with_capacity(cfg.batches as usize);
    let mut batch_sum = 0.0;
    let mut total = 0.0;
    let mut battery_total = 0.0;
    let mut counts = vec![0u64; actions.len()];
    for n in 0..cfg.n_slots {
        let cost = model.stage_cost(state);
        total += cost;
        battery_total += f64::from(model.battery(state));
        let (a, next) = step(state, &mut rng)?;
        counts[a] += 1;
        state = next;
        if n < batch_len * cfg.batches {
            batch_sum += cost;
            if (n + 1) % batch_len == 0 {
                batch_means.push(batch_sum / batch_len as f64);
                batch_sum = 0.0;
            }
        }
    }

    let n = cfg.n_slots as f64;
    let b = batch_means.len() as f64;
    let grand = batch_means.iter().sum::<f64>() / b;
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
    let t = StudentsT::new(0.0, 1.0, b - 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(TrajectoryStats {
        slots_simulated: cfg.n_slots,
        mean_aoi: total / n,
        ci_half_width: t * (var / b).sqrt(),
        action_frequencies: counts.iter().map(|&c| c as f64 / n).collect(),
        mean_battery: battery_total / n,
        seed: cfg.seed,
    })
}

/// Decision of the generate-at-will source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineAction {
    Harvest,
    /// Generate a packet at the start of the slot and transmit it.
    UpdateFresh,
}

impl BaselineAction {
    pub const ALL: [BaselineAction; 2] = [BaselineAction::Harvest, BaselineAction::UpdateFresh];

    pub fn code(self) -> &'static str {
        match self {
            BaselineAction::Harvest => "H",
            BaselineAction::UpdateFresh => "U",
        }
    }
}

impl fmt::Display for BaselineAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Generate-at-will MDP over `(battery, aoi, h, g)`, laid out
/// lexicographically like the joint model.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    b_max: u32,
    aoi_max: u32,
    levels: u32,
    delivery_aoi: u32,
    successors: Vec<u32>,
    marginal: Vec<f64>,
    weights: Vec<f64>,
}

const NONE: u32 = u32::MAX;

impl BaselineModel {
    /// Builds the baseline with destination AoI `delivery_aoi` right after
    /// an update.
    pub fn new(params: &SystemParams, q: &ChannelQuantizer, delivery_aoi: u32) -> Result<Self> {
        params.validate()?;
        if delivery_aoi == 0 {
            return Err(Error::InvalidArgument("delivery AoI must be at least 1".into()));
        }
        let b_max = params.b_max();
        let aoi_max = params.aoi_max;
        let levels = q.num_levels();
        let es = params.sampling_cost_quanta;
        let delivered = delivery_aoi.min(aoi_max);
        let mut successors = Vec::new();
        for b in 0..=b_max {
            for a in 1..=aoi_max {
                for h in 1..=levels {
                    for g in 1..=levels {
                        let harvest = b_max.min(b + q.harvest_quanta(g));
                        successors.push((harvest * aoi_max + aoi_max.min(a + 1) - 1) as u32);
                        let update = q
                            .tx_quanta(h)
                            .and_then(|tx| b.checked_sub(es + tx))
                            .map_or(NONE, |nb| nb * aoi_max + delivered - 1);
                        successors.push(update);
                    }
                }
            }
        }
        let marginal = q.probabilities();
        let weights = marginal.iter().flat_map(|ph| marginal.iter().map(move |pg| ph * pg)).collect();
        Ok(BaselineModel { b_max, aoi_max, levels, delivery_aoi: delivered, successors, marginal, weights })
    }

    pub fn delivery_aoi(&self) -> u32 {
        self.delivery_aoi
    }

    pub fn index(&self, battery: u32, aoi: u32, h: u32, g: u32) -> usize {
        let l = self.levels as usize;
        ((battery as usize * self.aoi_max as usize + aoi as usize - 1) * l + h as usize - 1) * l + g as usize - 1
    }

    fn decode(&self, idx: usize) -> (u32, u32, u32, u32) {
        let l = self.levels as usize;
        let g = idx % l;
        let h = (idx / l) % l;
        let core = idx / (l * l);
        let a = core % self.aoi_max as usize;
        let b = core / self.aoi_max as usize;
        (b as u32, a as u32 + 1, h as u32 + 1, g as u32 + 1)
    }

    /// Full battery, AoI 1, median channel levels.
    pub fn default_initial_index(&self) -> usize {
        let mid = self.levels.div_ceil(2);
        self.index(self.b_max, 1, mid, mid)
    }

    /// Transmit whenever affordable.
    pub fn greedy_policy(&self) -> Policy<BaselineAction> {
        let actions = (0..self.num_states())
            .map(|s| {
                if self.successor_core(s, 1).is_some() {
                    BaselineAction::UpdateFresh
                } else {
                    BaselineAction::Harvest
                }
            })
            .collect();
        Policy { actions, provenance: crate::solver::Provenance::Baseline }
    }
}

impl FactoredMdp for BaselineModel {
    type Action = BaselineAction;

    fn actions(&self) -> &[BaselineAction] {
        &BaselineAction::ALL
    }

    fn num_states(&self) -> usize {
        self.successors.len() / 2
    }

    fn num_cores(&self) -> usize {
        (self.b_max as usize + 1) * self.aoi_max as usize
    }

    fn channel_weights(&self) -> &[f64] {
        &self.weights
    }

    fn channel_marginal(&self) -> &[f64] {
        &self.marginal
    }

    fn successor_core(&self, state: usize, action: usize) -> Option<usize> {
        let c = self.successors[state * 2 + action];
        (c != NONE).then_some(c as usize)
    }

    fn stage_cost(&self, state: usize) -> f64 {
        f64::from(self.decode(state).1)
    }

    fn battery(&self, state: usize) -> u32 {
        self.decode(state).0
    }

    fn describe_state(&self, state: usize) -> String {
        let (b, a, h, g) = self.decode(state);
        format!("(B={b}, A={a}, h={h}, g={g})")
    }
}

/// Destination AoI right after a generate-at-will update.
pub const BASELINE_DELIVERY_AOI: u32 = 1;

/// Solves the generate-at-will MDP optimally with the shared RVIA engine.
pub fn solve_generate_at_will(
    params: &SystemParams,
    q: &ChannelQuantizer,
    cfg: &SolverConfig,
) -> Result<(BaselineModel, Solution<BaselineAction>)> {
    let model = BaselineModel::new(params, q, BASELINE_DELIVERY_AOI)?;
    let mut sol = relative_value_iteration(&model, cfg)?;
    sol.policy.provenance = crate::solver::Provenance::Baseline;
    Ok((model, sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Values in Mbit.
    PacketMbits,
    /// Values in energy quanta.
    SamplingCost,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PacketMbits => "packet_mbits",
            SweepAxis::SamplingCost => "sampling_cost",
        }
    }

    pub fn apply(self, base: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = base.clone();
        match self {
            SweepAxis::PacketMbits => p.packet_bits = value * 1e6,
            SweepAxis::SamplingCost => {
                if value < 0.0 || value.fract() != 0.0 || value > f64::from(u32::MAX) {
                    return Err(Error::InvalidArgument(format!("sampling cost must be a whole number, got {value}")));
                }
                p.sampling_cost_quanta = value as u32;
            }
        }
        Ok(p)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "packet_mbits" | "packet" | "M" => Ok(SweepAxis::PacketMbits),
            "sampling_cost" | "ES" | "es" => Ok(SweepAxis::SamplingCost),
            _ => Err(Error::InvalidArgument(format!("unknown sweep axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub solver: SolverConfig,
    pub baseline: bool,
    /// `None` skips simulation.
    pub rollout: Option<RolloutConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub packet_bits: f64,
    pub sampling_cost: u32,
    pub rho_joint: Option<f64>,
    pub rho_baseline: Option<f64>,
    pub sim_joint: Option<TrajectoryStats>,
    pub sim_baseline: Option<TrajectoryStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub base_hash: String,
    pub seed: Option<u64>,
    pub rows: Vec<SweepRow>,
}

fn sweep_point(base: &SystemParams, axis: SweepAxis, i: usize, value: f64, s: &SweepSettings) -> SweepRow {
    let mut row = SweepRow {
        value,
        packet_bits: base.packet_bits,
        sampling_cost: base.sampling_cost_quanta,
        rho_joint: None,
        rho_baseline: None,
        sim_joint: None,
        sim_baseline: None,
        error: None,
    };
    let run = |row: &mut SweepRow| -> Result<()> {
        let p = axis.apply(base, value)?;
        row.packet_bits = p.packet_bits;
        row.sampling_cost = p.sampling_cost_quanta;
        let model = TransitionModel::new(p.clone())?;
        let sol = relative_value_iteration(&model, &s.solver)?;
        row.rho_joint = Some(sol.values.rho);
        if let Some(rc) = &s.rollout {
            let start = model.space().index(&model.default_initial_state());
            let cfg = RolloutConfig { stream: 2 * i as u64, ..*rc };
            row.sim_joint = Some(rollout(&sol.policy, &model, start, &cfg)?);
        }
        if s.baseline {
            let (bm, bsol) = solve_generate_at_will(&p, model.quantizer(), &s.solver)?;
            row.rho_baseline = Some(bsol.values.rho);
            if let Some(rc) = &s.rollout {
                let cfg = RolloutConfig { stream: 2 * i as u64 + 1, ..*rc };
                row.sim_baseline = Some(rollout(&bsol.policy, &bm, bm.default_initial_index(), &cfg)?);
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.error = Some(e.to_string());
    }
    row
}

/// Solves (and optionally simulates) one configuration per value. A failing
/// point is recorded in its row and the sweep continues.
pub fn sweep(base: &SystemParams, axis: SweepAxis, values: &[f64], settings: &SweepSettings) -> SweepTable {
    let rows = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sweep_point(base, axis, i, v, settings))
        .collect();
    SweepTable {
        axis,
        base_hash: base.params_hash(),
        seed: settings.rollout.map(|r| r.seed),
        rows,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let seed = self.seed.map_or_else(|| "none".to_string(), |v| v.to_string());
        let _ = writeln!(s, "# params_hash={} seed={} axis={}", self.base_hash, seed, self.axis.name());
        s.push_str(
            "value,packet_bits,sampling_cost,rho_joint,rho_baseline,sim_joint,ci_joint,sim_baseline,ci_baseline,error\n",
        );
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], "'");
            let _ = writeln!(
                s,
                "{:?},{:?},{},{},{},{},{},{},{},\"{}\"",
                r.value,
                r.packet_bits,
                r.sampling_cost,
                opt(r.rho_joint),
                opt(r.rho_baseline),
                opt(r.sim_joint.as_ref().map(|t| t.mean_aoi)),
                opt(r.sim_joint.as_ref().map(|t| t.ci_half_width)),
                opt(r.sim_baseline.as_ref().map(|t| t.mean_aoi)),
                opt(r.sim_baseline.as_ref().map(|t| t.ci_half_width)),
                err
            );
        }
        s
    }
}

impl TrajectoryStats {
    pub fn to_csv<A: fmt::Display>(&self, params_hash: &str, actions: &[A]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# params_hash={params_hash} seed={}", self.seed);
        s.push_str("slots_simulated,mean_aoi,ci_half_width,mean_battery");
        for a in actions {
            let _ = write!(s, ",freq_{a}");
        }
        let _ = write!(
            s,
            "\n{},{:?},{:?},{:?}",
            self.slots_simulated, self.mean_aoi, self.ci_half_width, self.mean_battery
        );
        for f in &self.action_frequencies {
            let _ = write!(s, ",{f:?}");
        }
        s.push('\n');
        s
    }
}

/// Convenience used by the CLI: solve and simulate the joint policy.
pub fn simulate_joint(params: &SystemParams, solver: &SolverConfig, cfg: &RolloutConfig) -> Result<(f64, TrajectoryStats)> {
    let model = TransitionModel::new(params.clone())?;
    let sol = relative_value_iteration(&model, solver)?;
    let start = model.space().index(&model.default_initial_state());
    Ok((sol.values.rho, rollout(&sol.policy, &model, start, cfg)?))
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::mdp::{transition_distribution, Action, State};
    use crate::params::QuantizationMode;
    use crate::solver::Provenance;

    fn small_params(es: u32, levels: u32) -> SystemParams {
        let mut p = SystemParams::reference(es);
        p.battery_levels = 4;
        p.aoi_max = 4;
        p.tau_max = 4;
        p.channel_levels = levels;
        p.battery_capacity_j = 0.3e-3 / 9.0 * 3.0;
        p
    }

    fn quick(seed: u64) -> RolloutConfig {
        RolloutConfig { n_slots: 200_000, burn_in: 1_000, batches: 50, seed, stream: 0 }
    }

    /// Long-run average cost of `policy` from `start`, via the stationary
    /// distribution of the chain restricted to states reachable from it.
    fn stationary_average(model: &TransitionModel, policy: &Policy<Action>, start: State) -> f64 {
        let sp = *model.space();
        let mut seen = vec![false; sp.len()];
        let mut order = vec![start];
        seen[sp.index(&start)] = true;
        let mut k = 0;
        while k < order.len() {
            let s = order[k];
            for (t, _) in transition_distribution(&s, policy.at(model, &s), model).unwrap() {
                if !seen[sp.index(&t)] {
                    seen[sp.index(&t)] = true;
                    order.push(t);
                }
            }
            k += 1;
        }
        let n = order.len();
        let pos = |s: &State| order.iter().position(|o| o == s).unwrap();
        // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (i, s) in order.iter().enumerate() {
            m[(i, i)] -= 1.0;
            for (t, p) in transition_distribution(s, policy.at(model, s), model).unwrap() {
                m[(pos(&t), i)] += p;
            }
        }
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = m.lu().solve(&rhs).expect("single recurrent class");
        order.iter().enumerate().map(|(i, s)| pi[i] * f64::from(s.aoi)).sum()
    }

    #[test]
    fn rollout_matches_stationary_average() {
        for (es, levels) in [(1, 1), (1, 2), (2, 3)] {
            let model = TransitionModel::new(small_params(es, levels)).unwrap();
            let sol = relative_value_iteration(&model, &SolverConfig::with_tol(1e-9)).unwrap();
            let start = model.default_initial_state();
            let exact = stationary_average(&model, &sol.policy, start);
            assert!((exact - sol.values.rho).abs() < 1e-6, "oracle {exact} vs rho {}", sol.values.rho);
            let stats = rollout(&sol.policy, &model, model.space().index(&start), &quick(7)).unwrap();
            let slack = (3.0 * stats.ci_half_width).max(1e-9);
            assert!(
                (stats.mean_aoi - exact).abs() <= slack,
                "es={es} L={levels}: {} vs {exact} (ci {})",
                stats.mean_aoi,
                stats.ci_half_width
            );
        }
    }

    #[test]
    fn same_seed_same_stats() {
        let model = TransitionModel::new(small_params(1, 3)).unwrap();
        let sol = relative_value_iteration(&model, &SolverConfig::default()).unwrap();
        let start = model.space().index(&model.default_initial_state());
        let a = rollout(&sol.policy, &model, start, &quick(3)).unwrap();
        let b = rollout(&sol.policy, &model, start, &quick(3)).unwrap();
        assert_eq!(a, b);
        let c = rollout(&sol.policy, &model, start, &RolloutConfig { stream: 1, ..quick(3) }).unwrap();
        assert_ne!(a.mean_aoi, c.mean_aoi);
        assert!((a.action_frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.mean_aoi >= 1.0 && a.mean_aoi <= 4.0);
    }

    #[test]
    fn never_updating_saturates_aoi() {
        let model = TransitionModel::new(small_params(1, 2)).unwrap();
        let pol = Policy { actions: vec![Action::IH; model.num_states()], provenance: Provenance::External };
        let start = model.space().index(&model.default_initial_state());
        let cfg = RolloutConfig { n_slots: 1_000, burn_in: 10, batches: 10, seed: 1, stream: 0 };
        let stats = rollout(&pol, &model, start, &cfg).unwrap();
        assert_eq!(stats.mean_aoi, 4.0);
        assert_eq!(stats.ci_half_width, 0.0);
        assert_eq!(stats.action_frequencies[0], 1.0);
    }

    #[test]
    fn infeasible_action_names_the_state() {
        let model = TransitionModel::new(small_params(1, 2)).unwrap();
        let pol = Policy { actions: vec![Action::ST; model.num_states()], provenance: Provenance::External };
        let start = model.space().index(&State::new(0, 1, 1, 2, 2));
        let err = rollout(&pol, &model, start, &quick(1)).unwrap_err();
        match err {
            Error::InfeasibleAction { state, action } => {
                assert!(state.contains("B=0"), "{state}");
                assert_eq!(action, "ST");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let model = TransitionModel::new(small_params(1, 2)).unwrap();
        let pol = Policy { actions: vec![Action::IH; model.num_states()], provenance: Provenance::External };
        for cfg in [
            RolloutConfig { n_slots: 0, ..quick(0) },
            RolloutConfig { batches: 1, ..quick(0) },
        ] {
            assert!(rollout(&pol, &model, 0, &cfg).is_err());
        }
    }

    #[test]
    fn free_updates_give_unit_baseline() {
        let mut p = small_params(0, 3);
        p.packet_bits = 0.0;
        let q = crate::channel::build_quantizer(&p);
        let (_, sol) = solve_generate_at_will(&p, &q, &SolverConfig::with_tol(1e-9)).unwrap();
        assert!((sol.values.rho - 1.0).abs() < 1e-9, "{}", sol.values.rho);
    }

    #[test]
    fn baseline_transitions() {
        let p = small_params(1, 2);
        let q = ChannelQuantizer::from_tables(
            vec![
                crate::channel::ChannelLevel { gain: 1.0, probability: 0.5 },
                crate::channel::ChannelLevel { gain: 2.0, probability: 0.5 },
            ],
            vec![None, Some(1)],
            vec![0, 2],
        )
        .unwrap();
        let m = BaselineModel::new(&p, &q, 1).unwrap();
        // B=2, A=3, h=2: update costs E^S + tx = 2
        let s = m.index(2, 3, 2, 2);
        assert_eq!(m.successor_core(s, 1), Some(0));
        assert_eq!(m.successor_core(s, 0), Some(3 * 4 + 3));
        assert_eq!(m.successor_core(m.index(1, 3, 2, 1), 1), None);
        assert_eq!(m.successor_core(m.index(3, 3, 1, 1), 1), None);
        assert_eq!(m.describe_state(s), "(B=2, A=3, h=2, g=2)");
        assert_eq!(m.stage_cost(s), 3.0);
        assert_eq!(m.battery(s), 2);
    }

    #[test]
    fn solved_baseline_beats_greedy() {
        let p = small_params(2, 3);
        let q = crate::channel::build_quantizer(&p);
        let (m, sol) = solve_generate_at_will(&p, &q, &SolverConfig::default()).unwrap();
        let start = m.default_initial_index();
        let opt = rollout(&sol.policy, &m, start, &quick(11)).unwrap();
        let greedy = rollout(&m.greedy_policy(), &m, start, &quick(11)).unwrap();
        assert!(opt.mean_aoi <= greedy.mean_aoi + 3.0 * greedy.ci_half_width.max(opt.ci_half_width));
    }

    #[test]
    fn lower_bound_mode_is_pessimistic() {
        for es in 0..=3 {
            let lo = TransitionModel::new(small_params(es, 3)).unwrap();
            let hi = TransitionModel::new(small_params(es, 3).with_mode(QuantizationMode::UpperBound)).unwrap();
            let cfg = SolverConfig::with_tol(1e-9);
            let rl = relative_value_iteration(&lo, &cfg).unwrap().values.rho;
            let rh = relative_value_iteration(&hi, &cfg).unwrap().values.rho;
            assert!(rl >= rh - 2e-9, "es={es}: {rl} < {rh}");
        }
    }

    #[test]
    fn sweep_records_failures_and_keeps_going() {
        let base = small_params(1, 2);
        let settings = SweepSettings { solver: SolverConfig::default(), baseline: true, rollout: None };
        let empty = sweep(&base, SweepAxis::SamplingCost, &[], &settings);
        assert!(empty.rows.is_empty());
        let t = sweep(&base, SweepAxis::SamplingCost, &[0.0, 1.5, 2.0], &settings);
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows[0].rho_joint.is_some() && t.rows[0].rho_baseline.is_some());
        assert!(t.rows[1].error.is_some());
        assert!(t.rows[2].rho_joint.unwrap() >= t.rows[0].rho_joint.unwrap() - 1e-6);
        let csv = t.to_csv();
        assert!(csv.starts_with(&format!("# params_hash={} seed=none axis=sampling_cost\n", base.params_hash())));
        assert_eq!(csv.lines().count(), 5);
    }
}
