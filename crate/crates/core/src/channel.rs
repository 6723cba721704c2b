//! Fading quantization and the per-level energy budgets.
//!
//! Both links see gain `delta * d^-beta * theta^2` with `theta^2 ~ Exp(1)`.
//! The small-scale factor is cut into `L` equiprobable bins and each bin is
//! represented by its conditional mean, so the mean gain is preserved exactly.
//! Levels are numbered `1..=L` in increasing gain order.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::{QuantizationMode, SystemParams};

/// Energy in joules to push `packet_bits` through the uplink in one slot at
/// gain `h_gain` (Shannon rate).
pub fn transmit_energy_j(params: &SystemParams, h_gain: f64) -> Result<f64> {
    if !(h_gain.is_finite() && h_gain > 0.0) {
        return Err(Error::InvalidArgument(format!("uplink gain {h_gain} must be > 0")));
    }
    let spectral = params.packet_bits / (params.bandwidth_hz * params.slot_seconds);
    Ok(params.noise_power_w / h_gain * (spectral.exp2() - 1.0))
}

/// Energy in joules harvested during one WET slot at downlink gain `g_gain`,
/// using the logistic (saturating) harvester model. Returns zero below the
/// receiver sensitivity.
pub fn harvest_energy_j(params: &SystemParams, g_gain: f64) -> f64 {
    let p_rec = params.wet_tx_power_w * g_gain;
    if !(p_rec >= params.eh_sensitivity_w) || p_rec <= 0.0 {
        return 0.0;
    }
    let a = params.eh_steepness;
    let num = params.eh_max_power_w * (1.0 - (-a * p_rec).exp());
    let den = 1.0 + (-a * (p_rec - params.eh_inflexion_w)).exp();
    params.slot_seconds * num / den
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelLevel {
    /// Representative power gain (dimensionless).
    pub gain: f64,
    pub probability: f64,
}

/// Discrete gain levels plus the transmit and harvest budgets in quanta.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelQuantizer {
    levels: Vec<ChannelLevel>,
    /// `None` marks a level at which a transmission costs more than `b_max`.
    tx_quanta: Vec<Option<u32>>,
    harvest_quanta: Vec<u32>,
}

/// `E[X | X in [F^-1(lo_p), F^-1(hi_p))]` for `X ~ Exp(1)`, written in terms
/// of the survival probabilities at the bin edges.
fn exp1_conditional_mean(lower_cdf: f64, upper_cdf: f64) -> f64 {
    let s_lo = 1.0 - lower_cdf;
    let s_hi = 1.0 - upper_cdf;
    let x_lo = -s_lo.ln();
    // x e^{-x} -> 0 as x -> inf, so the open top bin contributes only its lower edge
    let hi_term = if s_hi > 0.0 { s_hi * (1.0 - s_hi.ln()) } else { 0.0 };
    (s_lo * (x_lo + 1.0) - hi_term) / (s_lo - s_hi)
}

/// Builds the equiprobable quantizer and fills its energy tables.
pub fn build_quantizer(params: &SystemParams) -> ChannelQuantizer {
    let n = params.channel_levels.max(1);
    let scale = params.mean_path_gain();
    let prob = 1.0 / f64::from(n);
    let levels = (0..n)
        .map(|i| {
            let lo = f64::from(i) / f64::from(n);
            let hi = if i + 1 == n { 1.0 } else { f64::from(i + 1) / f64::from(n) };
            ChannelLevel {
                gain: scale * exp1_conditional_mean(lo, hi),
                probability: prob,
            }
        })
        .collect();
    let q = ChannelQuantizer {
        levels,
        tx_quanta: Vec::new(),
        harvest_quanta: Vec::new(),
    };
    energy_quanta_tables(params, q)
}

/// Converts each level's transmit and harvest energy to battery quanta under
/// the configured rounding regime.
pub fn energy_quanta_tables(params: &SystemParams, mut q: ChannelQuantizer) -> ChannelQuantizer {
    let eq = params.energy_quantum_j();
    let b_max = params.b_max();
    let (round_tx, round_eh): (fn(f64) -> f64, fn(f64) -> f64) = match params.quantization_mode {
        QuantizationMode::LowerBound => (f64::ceil, f64::floor),
        QuantizationMode::UpperBound => (f64::floor, f64::ceil),
    };
    q.tx_quanta = q
        .levels
        .iter()
        .map(|l| {
            let e = transmit_energy_j(params, l.gain).unwrap_or(f64::INFINITY);
            let quanta = round_tx(e / eq);
            (quanta <= f64::from(b_max)).then_some(quanta as u32)
        })
        .collect();
    q.harvest_quanta = q
        .levels
        .iter()
        .map(|l| {
            let quanta = round_eh(harvest_energy_j(params, l.gain) / eq);
            quanta.min(f64::from(u32::MAX)) as u32
        })
        .collect();
    q
}

impl ChannelQuantizer {
    /// Assembles a quantizer from explicit tables, e.g. for small hand-built
    /// instances. Checks lengths, ordering and normalization.
    pub fn from_tables(
        levels: Vec<ChannelLevel>,
        tx_quanta: Vec<Option<u32>>,
        harvest_quanta: Vec<u32>,
    ) -> Result<Self> {
        if levels.is_empty() || tx_quanta.len() != levels.len() || harvest_quanta.len() != levels.len() {
            return Err(Error::InvalidArgument(
                "quantizer tables must be non-empty and of equal length".into(),
            ));
        }
        let total: f64 = levels.iter().map(|l| l.probability).sum();
        if (total - 1.0).abs() > 1e-9 || levels.iter().any(|l| !(l.probability > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "level probabilities must be positive and sum to 1 (sum = {total})"
            )));
        }
        if levels.windows(2).any(|w| w[1].gain <= w[0].gain) {
            return Err(Error::InvalidArgument("level gains must be strictly increasing".into()));
        }
        Ok(ChannelQuantizer { levels, tx_quanta, harvest_quanta })
    }

    pub fn num_levels(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn levels(&self) -> &[ChannelLevel] {
        &self.levels
    }

    /// Level `level` in `1..=L`.
    pub fn level(&self, level: u32) -> &ChannelLevel {
        &self.levels[level as usize - 1]
    }

    pub fn tx_quanta(&self, level: u32) -> Option<u32> {
        self.tx_quanta[level as usize - 1]
    }

    pub fn harvest_quanta(&self, level: u32) -> u32 {
        self.harvest_quanta[level as usize - 1]
    }

    pub fn tx_quanta_table(&self) -> &[Option<u32>] {
        &self.tx_quanta
    }

    pub fn harvest_quanta_table(&self) -> &[u32] {
        &self.harvest_quanta
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.probability).collect()
    }

    /// Audit dump: `level,gain,probability,tx_quanta,harvest_quanta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,gain,probability,tx_quanta,harvest_quanta\n");
        for (i, l) in self.levels.iter().enumerate() {
            let tx = match self.tx_quanta[i] {
                Some(t) => t.to_string(),
                None => "infeasible".into(),
            };
            let _ = writeln!(
                out,
                "{},{:e},{},{},{}",
                i + 1,
                l.gain,
                l.probability,
                tx,
                self.harvest_quanta[i]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    /// Composite Simpson quadrature of `x e^-x` on `[a, b]`.
    fn simpson_first_moment(a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| x * (-x).exp();
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn single_level_is_mean_gain() {
        let mut p = SystemParams::reference(3);
        p.channel_levels = 1;
        let q = build_quantizer(&p);
        assert_eq!(q.num_levels(), 1);
        assert_relative_eq!(q.level(1).gain, p.mean_path_gain(), max_relative = 1e-12);
        assert_eq!(q.level(1).probability, 1.0);
    }

    #[test]
    fn ten_levels_against_quadrature() {
        let p = SystemParams::reference(3);
        let q = build_quantizer(&p);
        let scale = p.mean_path_gain();
        for (i, l) in q.levels().iter().enumerate() {
            assert_eq!(l.probability, 0.1);
            let a = -(1.0 - i as f64 / 10.0).ln();
            let b = if i == 9 { 60.0 } else { -(1.0 - (i + 1) as f64 / 10.0).ln() };
            let oracle = simpson_first_moment(a, b) * 10.0;
            assert_relative_eq!(l.gain / scale, oracle, max_relative = 1e-8);
        }
        assert!(q.level(10).gain > 2.3 * scale);
        // frozen from quadrature: 3.302585...
        assert!((q.level(10).gain / scale - 3.302_585_093).abs() < 1e-8);
    }

    #[test]
    fn transmit_energy_reference() {
        let mut p = SystemParams::reference(3);
        let h = p.mean_path_gain();
        assert!((transmit_energy_j(&p, h).unwrap() - 2.023_363_6e-5).abs() < 1e-8);
        let e = transmit_energy_j(&p, h).unwrap();
        assert_relative_eq!(transmit_energy_j(&p, 2.0 * h).unwrap(), e / 2.0, max_relative = 1e-12);
        assert!(transmit_energy_j(&p, 0.0).is_err());
        assert!(transmit_energy_j(&p, -1.0).is_err());
        p.packet_bits = 0.0;
        assert_eq!(transmit_energy_j(&p, h).unwrap(), 0.0);
    }

    #[test]
    fn harvest_energy_reference() {
        let p = SystemParams::reference(3);
        let g = p.mean_path_gain();
        // independent evaluation of the logistic model at P_rec = 10^0.7 * 6.4e-5
        assert_relative_eq!(harvest_energy_j(&p, g), 3.408_681_035e-4, max_relative = 1e-8);
        // -13 dBm gate: received 5.01e-5 W needs g >= 1e-5
        assert_eq!(harvest_energy_j(&p, 0.99e-5), 0.0);
        assert!(harvest_energy_j(&p, 1.01e-5) > 0.0);
        let sat = harvest_energy_j(&p, 1.0);
        assert_relative_eq!(sat, p.eh_max_power_w * p.slot_seconds, max_relative = 1e-9);
    }

    #[test]
    fn zero_packet_costs_nothing() {
        let mut p = SystemParams::reference(3);
        p.packet_bits = 0.0;
        let q = build_quantizer(&p);
        assert!(q.tx_quanta_table().iter().all(|t| *t == Some(0)));
    }

    #[test]
    fn reference_quanta_tables() {
        let q = build_quantizer(&SystemParams::reference(3));
        let tx: Vec<_> = q.tx_quanta_table().to_vec();
        // level 1 needs 12 quanta > b_max = 9
        assert_eq!(tx[0], None);
        assert_eq!(q.tx_quanta(5), Some(2));
        assert_eq!(q.harvest_quanta(1), 0);
        assert_eq!(q.harvest_quanta(6), 7);
    }

    #[test]
    fn csv_dump_shape() {
        let q = build_quantizer(&SystemParams::reference(3));
        let csv = q.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "level,gain,probability,tx_quanta,harvest_quanta");
        assert!(lines[1].starts_with("1,") && lines[1].contains("infeasible"));
    }

    proptest! {
        #[test]
        fn quantizer_invariants(levels in 1u32..=64, es in 0u32..=6, mbits in 0.0f64..16.0) {
            let mut p = SystemParams::reference(es);
            p.channel_levels = levels;
            p.packet_bits = mbits * 1e6;
            let lower = build_quantizer(&p);
            let upper = build_quantizer(&p.clone().with_mode(QuantizationMode::UpperBound));

            let total: f64 = lower.levels().iter().map(|l| l.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for w in lower.levels().windows(2) {
                prop_assert!(w[1].gain > w[0].gain);
            }
            for w in lower.harvest_quanta_table().windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            let feasible: Vec<u32> = lower.tx_quanta_table().iter().flatten().copied().collect();
            for w in feasible.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for lvl in 1..=levels {
                let (lt, ut) = (lower.tx_quanta(lvl), upper.tx_quanta(lvl));
                match (lt, ut) {
                    (Some(a), Some(b)) => prop_assert!(a >= b),
                    (Some(_), None) => prop_assert!(false, "upper mode lost a feasible level"),
                    _ => {}
                }
                prop_assert!(lower.harvest_quanta(lvl) <= upper.harvest_quanta(lvl));
            }
        }

        #[test]
        fn energy_monotonicity(g in 1e-7f64..1e-2, f in 1.0001f64..10.0) {
            let p = SystemParams::reference(3);
            prop_assert!(harvest_energy_j(&p, g * f) >= harvest_energy_j(&p, g));
            prop_assert!(harvest_energy_j(&p, g) <= p.eh_max_power_w * p.slot_seconds);
            prop_assert!(transmit_energy_j(&p, g * f).unwrap() < transmit_energy_j(&p, g).unwrap());
        }
    }
}
