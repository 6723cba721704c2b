//! State space, actions, dynamics and the factored transition kernel.
//!
//! A state is `(B, A, tau, h, g)`: battery quanta, destination AoI, age of the
//! packet held at the source, and the uplink/downlink channel levels. Given a
//! state and an action the next `(B, A, tau)` is deterministic; only the next
//! channel pair is random, drawn i.i.d. from the quantizer each slot. The
//! kernel is therefore stored as one successor "core" per (state, action)
//! plus the channel distribution.
//!
//! Dense indices are lexicographic in `(battery, aoi, tau, h, g)`, so all
//! `L^2` channel variants of a core occupy one contiguous block.

use std::fmt;
use std::str::FromStr;

use crate::channel::{build_quantizer, ChannelQuantizer};
use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Version tag of the dense index layout written into artifacts.
pub const INDEX_LAYOUT: &str = "v1 lexicographic (battery,aoi,tau,h,g)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sampling {
    Idle,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotUse {
    Harvest,
    Transmit,
}

/// Joint decision for one slot: whether to generate a fresh sample, and
/// whether the slot carries an uplink transmission or downlink WET.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub sample: Sampling,
    pub slot_use: SlotUse,
}

impl Action {
    pub const IH: Action = Action { sample: Sampling::Idle, slot_use: SlotUse::Harvest };
    pub const SH: Action = Action { sample: Sampling::Sample, slot_use: SlotUse::Harvest };
    pub const IT: Action = Action { sample: Sampling::Idle, slot_use: SlotUse::Transmit };
    pub const ST: Action = Action { sample: Sampling::Sample, slot_use: SlotUse::Transmit };

    /// All actions in tie-break order: `IH < SH < IT < ST`.
    pub const ALL: [Action; 4] = [Action::IH, Action::SH, Action::IT, Action::ST];

    /// Position in [`Action::ALL`].
    pub fn index(self) -> usize {
        match (self.sample, self.slot_use) {
            (Sampling::Idle, SlotUse::Harvest) => 0,
            (Sampling::Sample, SlotUse::Harvest) => 1,
            (Sampling::Idle, SlotUse::Transmit) => 2,
            (Sampling::Sample, SlotUse::Transmit) => 3,
        }
    }

    pub fn samples(self) -> bool {
        self.sample == Sampling::Sample
    }

    pub fn transmits(self) -> bool {
        self.slot_use == SlotUse::Transmit
    }

    pub fn code(self) -> &'static str {
        ["IH", "SH", "IT", "ST"][self.index()]
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "IH" => Ok(Action::IH),
            "SH" => Ok(Action::SH),
            "IT" => Ok(Action::IT),
            "ST" => Ok(Action::ST),
            other => Err(Error::InvalidArgument(format!("unknown action code {other:?}"))),
        }
    }
}

/// Small bitset of actions, iterated in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub battery: u32,
    pub aoi: u32,
    pub tau: u32,
    pub h_level: u32,
    pub g_level: u32,
}

impl State {
    pub fn new(battery: u32, aoi: u32, tau: u32, h_level: u32, g_level: u32) -> Self {
        State { battery, aoi, tau, h_level, g_level }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(B={}, A={}, tau={}, h={}, g={})",
            self.battery, self.aoi, self.tau, self.h_level, self.g_level
        )
    }
}

/// Bounds of the joint state space and the dense index mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub b_max: u32,
    pub aoi_max: u32,
    pub tau_max: u32,
    pub levels: u32,
}

impl StateSpace {
    pub fn from_params(p: &SystemParams) -> Self {
        StateSpace {
            b_max: p.b_max(),
            aoi_max: p.aoi_max,
            tau_max: p.tau_max,
            levels: p.channel_levels,
        }
    }

    pub fn channel_block(&self) -> usize {
        (self.levels * self.levels) as usize
    }

    pub fn num_cores(&self) -> usize {
        (self.b_max as usize + 1) * self.aoi_max as usize * self.tau_max as usize
    }

    pub fn len(&self) -> usize {
        self.num_cores() * self.channel_block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, s: &State) -> bool {
        s.battery <= self.b_max
            && (1..=self.aoi_max).contains(&s.aoi)
            && (1..=self.tau_max).contains(&s.tau)
            && (1..=self.levels).contains(&s.h_level)
            && (1..=self.levels).contains(&s.g_level)
    }

    pub fn core_index(&self, battery: u32, aoi: u32, tau: u32) -> usize {
        ((battery as usize * self.aoi_max as usize) + (aoi - 1) as usize) * self.tau_max as usize
            + (tau - 1) as usize
    }

    /// Caller guarantees `self.contains(s)`.
    pub fn index(&self, s: &State) -> usize {
        let l = self.levels as usize;
        self.core_index(s.battery, s.aoi, s.tau) * l * l
            + (s.h_level - 1) as usize * l
            + (s.g_level - 1) as usize
    }

    pub fn state(&self, idx: usize) -> State {
        let l = self.levels as usize;
        let g = idx % l;
        let h = (idx / l) % l;
        let core = idx / (l * l);
        let tau = core % self.tau_max as usize;
        let aoi = (core / self.tau_max as usize) % self.aoi_max as usize;
        let battery = core / (self.tau_max as usize * self.aoi_max as usize);
        State {
            battery: battery as u32,
            aoi: aoi as u32 + 1,
            tau: tau as u32 + 1,
            h_level: h as u32 + 1,
            g_level: g as u32 + 1,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }
}

/// Actions the battery can pay for. Idle-harvest is always available.
pub fn feasible_actions(state: &State, q: &ChannelQuantizer, params: &SystemParams) -> ActionSet {
    let b = state.battery;
    let es = params.sampling_cost_quanta;
    let mut set = ActionSet::default();
    set.insert(Action::IH);
    if b >= es {
        set.insert(Action::SH);
    }
    if let Some(tx) = q.tx_quanta(state.h_level) {
        if b >= tx {
            set.insert(Action::IT);
        }
        if u64::from(b) >= u64::from(es) + u64::from(tx) {
            set.insert(Action::ST);
        }
    }
    set
}

fn infeasible(state: &State, action: Action) -> Error {
    Error::InfeasibleAction {
        state: state.to_string(),
        action: action.to_string(),
    }
}

/// Battery level at the start of the next slot.
pub fn next_battery(
    state: &State,
    action: Action,
    q: &ChannelQuantizer,
    params: &SystemParams,
) -> Result<u32> {
    if !feasible_actions(state, q, params).contains(action) {
        return Err(infeasible(state, action));
    }
    let b = u64::from(state.battery);
    let es = u64::from(params.sampling_cost_quanta);
    let cap = u64::from(params.b_max());
    let next = match (action.sample, action.slot_use) {
        (Sampling::Idle, SlotUse::Transmit) => b - u64::from(q.tx_quanta(state.h_level).unwrap()),
        (Sampling::Sample, SlotUse::Transmit) => {
            b - es - u64::from(q.tx_quanta(state.h_level).unwrap())
        }
        (Sampling::Idle, SlotUse::Harvest) => {
            cap.min(b + u64::from(q.harvest_quanta(state.g_level)))
        }
        (Sampling::Sample, SlotUse::Harvest) => {
            cap.min(b - es + u64::from(q.harvest_quanta(state.g_level)))
        }
    };
    Ok(next as u32)
}

/// Destination AoI next slot: a transmission delivers the held packet, whose
/// age becomes `tau + 1`; otherwise the AoI grows by one. Both saturate.
pub fn next_aoi(state: &State, action: Action, params: &SystemParams) -> u32 {
    let grown = if action.transmits() { state.tau } else { state.aoi };
    params.aoi_max.min(grown + 1)
}

/// Age of the packet held at the source next slot. A fresh sample replaces
/// the held packet (after the old one was sent, for `ST`).
pub fn next_tau(state: &State, action: Action, params: &SystemParams) -> u32 {
    if action.samples() {
        1
    } else {
        params.tau_max.min(state.tau + 1)
    }
}

/// Per-slot cost: the AoI currently seen at the destination.
pub fn stage_cost(state: &State) -> f64 {
    f64::from(state.aoi)
}

/// An average-cost MDP whose kernel factors into a deterministic successor
/// "core" and an i.i.d. channel draw.
///
/// State indices are `core * K + c` with `K = channel_weights().len()`; from
/// any state, action `a` leads to core `successor_core(s, a)` and the channel
/// part `c'` is drawn with probability `channel_weights()[c']`.
pub trait FactoredMdp: Sync {
    type Action: Copy + PartialEq + fmt::Debug + fmt::Display + Send + Sync;

    /// Actions in tie-break order.
    fn actions(&self) -> &[Self::Action];
    fn num_states(&self) -> usize;
    fn num_cores(&self) -> usize;
    /// Joint channel distribution over one block.
    fn channel_weights(&self) -> &[f64];
    /// Per-link marginal; the joint draw is the product of two independent
    /// draws from it (uplink first).
    fn channel_marginal(&self) -> &[f64];
    /// `None` when action `a` (an index into `actions()`) is infeasible.
    fn successor_core(&self, state: usize, action: usize) -> Option<usize>;
    fn stage_cost(&self, state: usize) -> f64;
    /// Battery level of `state`, in quanta.
    fn battery(&self, state: usize) -> u32;
    fn describe_state(&self, state: usize) -> String;
}

const NO_SUCCESSOR: u32 = u32::MAX;

/// Immutable, fully tabulated joint model.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    params: SystemParams,
    quantizer: ChannelQuantizer,
    space: StateSpace,
    successors: Vec<u32>,
    marginal: Vec<f64>,
    weights: Vec<f64>,
}

impl TransitionModel {
    /// Validates `params`, builds the quantizer and tabulates the dynamics.
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        let q = build_quantizer(&params);
        Self::with_quantizer(params, q)
    }

    /// Uses a caller-supplied quantizer (for hand-built instances).
    pub fn with_quantizer(params: SystemParams, quantizer: ChannelQuantizer) -> Result<Self> {
        if quantizer.num_levels() != params.channel_levels {
            return Err(Error::InvalidArgument(format!(
                "quantizer has {} levels but params declare {}",
                quantizer.num_levels(),
                params.channel_levels
            )));
        }
        if params.battery_levels < 1 || params.aoi_max < 1 || params.tau_max < 1 {
            return Err(Error::InvalidArgument("empty state space".into()));
        }
        let space = StateSpace::from_params(&params);
        let mut successors = vec![NO_SUCCESSOR; space.len() * Action::ALL.len()];
        for (idx, s) in space.iter().enumerate() {
            for a in feasible_actions(&s, &quantizer, &params).iter() {
                let b = next_battery(&s, a, &quantizer, &params)?;
                let core = space.core_index(b, next_aoi(&s, a, &params), next_tau(&s, a, &params));
                successors[idx * 4 + a.index()] = core as u32;
            }
        }
        let marginal = quantizer.probabilities();
        let weights = marginal
            .iter()
            .flat_map(|ph| marginal.iter().map(move |pg| ph * pg))
            .collect();
        Ok(TransitionModel {
            params,
            quantizer,
            space,
            successors,
            marginal,
            weights,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn quantizer(&self) -> &ChannelQuantizer {
        &self.quantizer
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn feasible(&self, state: &State) -> ActionSet {
        feasible_actions(state, &self.quantizer, &self.params)
    }

    /// Deterministic part of the successor: `(battery', aoi', tau')`.
    pub fn next_core(&self, state: &State, action: Action) -> Result<(u32, u32, u32)> {
        let b = next_battery(state, action, &self.quantizer, &self.params)?;
        Ok((b, next_aoi(state, action, &self.params), next_tau(state, action, &self.params)))
    }

    /// Initial state used by rollouts: full battery, fresh ages, median channels.
    pub fn default_initial_state(&self) -> State {
        let mid = self.space.levels.div_ceil(2);
        State::new(self.space.b_max, 1, 1, mid, mid)
    }
}

/// All `L^2` successors of `(state, action)` with their probabilities.
pub fn transition_distribution(
    state: &State,
    action: Action,
    model: &TransitionModel,
) -> Result<Vec<(State, f64)>> {
    let (b, a, t) = model.next_core(state, action)?;
    let probs = model.quantizer.probabilities();
    let mut out = Vec::with_capacity(probs.len() * probs.len());
    for (h, ph) in probs.iter().enumerate() {
        for (g, pg) in probs.iter().enumerate() {
            out.push((State::new(b, a, t, h as u32 + 1, g as u32 + 1), ph * pg));
        }
    }
    Ok(out)
}

impl FactoredMdp for TransitionModel {
    type Action = Action;

    fn actions(&self) -> &[Action] {
        &Action::ALL
    }

    fn num_states(&self) -> usize {
        self.space.len()
    }

    fn num_cores(&self) -> usize {
        self.space.num_cores()
    }

    fn channel_weights(&self) -> &[f64] {
        &self.weights
    }

    fn channel_marginal(&self) -> &[f64] {
        &self.marginal
    }

    fn successor_core(&self, state: usize, action: usize) -> Option<usize> {
        let c = self.successors[state * 4 + action];
        (c != NO_SUCCESSOR).then_some(c as usize)
    }

    fn stage_cost(&self, state: usize) -> f64 {
        // aoi is the second coordinate of the core
        let core = state / self.space.channel_block();
        f64::from((core / self.space.tau_max as usize) as u32 % self.space.aoi_max + 1)
    }

    fn battery(&self, state: usize) -> u32 {
        (state / self.space.channel_block() / (self.space.tau_max * self.space.aoi_max) as usize)
            as u32
    }

    fn describe_state(&self, state: usize) -> String {
        self.space.state(state).to_string()
    }
}
