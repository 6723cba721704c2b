//! Physical constants and discretization choices.
//!
//! Every quantity is stored in linear SI units (watts, joules, hertz, seconds,
//! bits). Logarithmic inputs are converted once, at construction or at config
//! load, with [`dbm_to_watts`].

use std::fmt::{self, Write as _};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::channel;
use crate::error::{Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> Result<f64> {
    if !p_dbm.is_finite() {
        return Err(Error::InvalidArgument(format!("power {p_dbm} dBm is not finite")));
    }
    Ok(10f64.powf((p_dbm - 30.0) / 10.0))
}

/// Converts a strictly positive power in watts to dBm.
pub fn watts_to_dbm(p_w: f64) -> Result<f64> {
    if !(p_w.is_finite() && p_w > 0.0) {
        return Err(Error::InvalidArgument(format!("power {p_w} W must be finite and > 0")));
    }
    Ok(10.0 * p_w.log10() + 30.0)
}

/// Which rounding regime the battery dynamics use.
///
/// `LowerBound` rounds transmit energy up and harvested energy down, so the
/// discrete system is never better off than the continuous one. `UpperBound`
/// swaps the two operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum QuantizationMode {
    #[default]
    LowerBound,
    UpperBound,
}

impl fmt::Display for QuantizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizationMode::LowerBound => "lower",
            QuantizationMode::UpperBound => "upper",
        })
    }
}

impl FromStr for QuantizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower" | "lowerbound" | "lower_bound" => Ok(QuantizationMode::LowerBound),
            "upper" | "upperbound" | "upper_bound" => Ok(QuantizationMode::UpperBound),
            other => Err(Error::InvalidArgument(format!(
                "unknown quantization mode {other:?} (expected lower|upper)"
            ))),
        }
    }
}

/// All physical and discretization constants of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Channel bandwidth `W` in Hz.
    pub bandwidth_hz: f64,
    /// Status-update packet size `M` in bits.
    pub packet_bits: f64,
    /// Noise power at the destination, watts.
    pub noise_power_w: f64,
    /// Average WET transmit power of the destination, watts.
    pub wet_tx_power_w: f64,
    /// Saturation power of the harvesting circuit, watts.
    pub eh_max_power_w: f64,
    /// Steepness of the logistic harvesting curve, 1/W.
    pub eh_steepness: f64,
    /// Inflexion point of the logistic harvesting curve, watts.
    pub eh_inflexion_w: f64,
    /// Received power below which nothing is harvested, watts.
    pub eh_sensitivity_w: f64,
    /// Battery capacity in joules.
    pub battery_capacity_j: f64,
    /// Number of discrete battery values, `b_max + 1`.
    pub battery_levels: u32,
    pub aoi_max: u32,
    pub tau_max: u32,
    /// Number of discrete gain levels per link.
    pub channel_levels: u32,
    /// Energy needed to generate one update, in quanta.
    pub sampling_cost_quanta: u32,
    /// Power gain at the 1 m reference distance.
    pub path_gain_ref: f64,
    pub path_loss_exp: f64,
    pub distance_m: f64,
    pub slot_seconds: f64,
    pub quantization_mode: QuantizationMode,
}

fn dbm(p: f64) -> f64 {
    10f64.powf((p - 30.0) / 10.0)
}

impl SystemParams {
    /// The reference configuration: 1 MHz, 25 m, 37 dBm WET power, 12 dBm
    /// harvester saturation, -95 dBm noise, 12 Mbit packets, 0.3 mJ battery,
    /// ten levels per state variable.
    ///
    /// The sampling cost changes between experiments, so it must be supplied.
    pub fn reference(sampling_cost_quanta: u32) -> Self {
        SystemParams {
            bandwidth_hz: 1.0e6,
            packet_bits: 12.0e6,
            noise_power_w: dbm(-95.0),
            wet_tx_power_w: dbm(37.0),
            eh_max_power_w: dbm(12.0),
            eh_steepness: 1500.0,
            eh_inflexion_w: 0.0022,
            eh_sensitivity_w: dbm(-13.0),
            battery_capacity_j: 0.3e-3,
            battery_levels: 10,
            aoi_max: 10,
            tau_max: 10,
            channel_levels: 10,
            sampling_cost_quanta,
            path_gain_ref: 4.0e-2,
            path_loss_exp: 2.0,
            distance_m: 25.0,
            slot_seconds: 1.0,
            quantization_mode: QuantizationMode::LowerBound,
        }
    }

    /// Largest battery level in quanta.
    pub fn b_max(&self) -> u32 {
        self.battery_levels.saturating_sub(1)
    }

    /// Joules per battery quantum.
    pub fn energy_quantum_j(&self) -> f64 {
        self.battery_capacity_j / f64::from(self.b_max())
    }

    /// Large-scale gain `delta * d^-beta` shared by both links.
    pub fn mean_path_gain(&self) -> f64 {
        self.path_gain_ref * self.distance_m.powf(-self.path_loss_exp)
    }

    pub fn with_mode(mut self, mode: QuantizationMode) -> Self {
        self.quantization_mode = mode;
        self
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("wet_tx_power_w", self.wet_tx_power_w),
            ("eh_max_power_w", self.eh_max_power_w),
            ("eh_steepness", self.eh_steepness),
            ("eh_inflexion_w", self.eh_inflexion_w),
            ("battery_capacity_j", self.battery_capacity_j),
            ("path_gain_ref", self.path_gain_ref),
            ("path_loss_exp", self.path_loss_exp),
            ("distance_m", self.distance_m),
            ("slot_seconds", self.slot_seconds),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} must be finite and > 0 (got {v})"));
            }
        }
        // a zero-size packet is the degenerate "free transmission" case
        if !(self.packet_bits.is_finite() && self.packet_bits >= 0.0) {
            errs.push(format!("packet_bits must be finite and >= 0 (got {})", self.packet_bits));
        }
        if !(self.eh_sensitivity_w.is_finite() && self.eh_sensitivity_w >= 0.0) {
            errs.push(format!(
                "eh_sensitivity_w must be finite and >= 0 (got {})",
                self.eh_sensitivity_w
            ));
        }
        if self.battery_levels < 2 {
            errs.push(format!("battery_levels ≥ 2 (got {})", self.battery_levels));
        }
        if self.channel_levels < 1 {
            errs.push("channel_levels ≥ 1 (got 0)".to_string());
        }
        if self.aoi_max < 1 {
            errs.push("aoi_max ≥ 1 (got 0)".to_string());
        }
        if self.tau_max < 1 {
            errs.push("tau_max ≥ 1 (got 0)".to_string());
        }
        if self.battery_levels >= 2 && self.sampling_cost_quanta > self.b_max() {
            errs.push(format!(
                "sampling_cost_quanta ≤ battery_levels - 1 = {} (got {})",
                self.b_max(),
                self.sampling_cost_quanta
            ));
        }
        if errs.is_empty() {
            let q = channel::build_quantizer(self);
            if q.tx_quanta_table().iter().all(Option::is_none) {
                errs.push(format!(
                    "no channel level can afford a transmission within b_max = {} quanta",
                    self.b_max()
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Canonical flat `key = value` rendering; every field, fixed order,
    /// shortest round-trip float formatting.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("bandwidth_hz", format!("{:?}", self.bandwidth_hz)),
            ("packet_bits", format!("{:?}", self.packet_bits)),
            ("noise_power_w", format!("{:?}", self.noise_power_w)),
            ("wet_tx_power_w", format!("{:?}", self.wet_tx_power_w)),
            ("eh_max_power_w", format!("{:?}", self.eh_max_power_w)),
            ("eh_steepness", format!("{:?}", self.eh_steepness)),
            ("eh_inflexion_w", format!("{:?}", self.eh_inflexion_w)),
            ("eh_sensitivity_w", format!("{:?}", self.eh_sensitivity_w)),
            ("battery_capacity_j", format!("{:?}", self.battery_capacity_j)),
            ("battery_levels", self.battery_levels.to_string()),
            ("aoi_max", self.aoi_max.to_string()),
            ("tau_max", self.tau_max.to_string()),
            ("channel_levels", self.channel_levels.to_string()),
            ("sampling_cost_quanta", self.sampling_cost_quanta.to_string()),
            ("path_gain_ref", format!("{:?}", self.path_gain_ref)),
            ("path_loss_exp", format!("{:?}", self.path_loss_exp)),
            ("distance_m", format!("{:?}", self.distance_m)),
            ("slot_seconds", format!("{:?}", self.slot_seconds)),
            ("quantization_mode", self.quantization_mode.to_string()),
        ]
    }

    /// Short hex digest of the canonical rendering. Artifacts carry it so that
    /// files produced under different configurations are never mixed.
    pub fn params_hash(&self) -> String {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a flat `key = value` config.
    ///
    /// Unspecified keys keep their reference values, except
    /// `sampling_cost_quanta`, which is mandatory. Power fields accept either
    /// a `_w` key or the matching `_dbm` key. Blank lines and `#` comments are
    /// ignored.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut p = SystemParams::reference(0);
        let mut have_sampling_cost = false;
        let mut seen = std::collections::HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cfg_err = |msg: String| Error::Config { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();

            let (field, is_dbm) = match key.strip_suffix("_dbm") {
                Some(stem) => (format!("{stem}_w"), true),
                None => (key.to_string(), false),
            };
            if !seen.insert(field.clone()) {
                return Err(cfg_err(format!("duplicate key for field {field}")));
            }

            let real = || -> Result<f64> {
                let v: f64 = value
                    .parse()
                    .map_err(|_| cfg_err(format!("{key}: {value:?} is not a number")))?;
                if is_dbm {
                    dbm_to_watts(v).map_err(|e| cfg_err(e.to_string()))
                } else {
                    Ok(v)
                }
            };
            let int = || -> Result<u32> {
                value
                    .parse()
                    .map_err(|_| cfg_err(format!("{key}: {value:?} is not a nonnegative integer")))
            };

            let power_field = matches!(
                field.as_str(),
                "noise_power_w"
                    | "wet_tx_power_w"
                    | "eh_max_power_w"
                    | "eh_inflexion_w"
                    | "eh_sensitivity_w"
            );
            if is_dbm && !power_field {
                return Err(cfg_err(format!("{key}: only power fields accept a _dbm suffix")));
            }

            match field.as_str() {
                "bandwidth_hz" => p.bandwidth_hz = real()?,
                "packet_bits" => p.packet_bits = real()?,
                "noise_power_w" => p.noise_power_w = real()?,
                "wet_tx_power_w" => p.wet_tx_power_w = real()?,
                "eh_max_power_w" => p.eh_max_power_w = real()?,
                "eh_steepness" => p.eh_steepness = real()?,
                "eh_inflexion_w" => p.eh_inflexion_w = real()?,
                "eh_sensitivity_w" => p.eh_sensitivity_w = real()?,
                "battery_capacity_j" => p.battery_capacity_j = real()?,
                "battery_levels" => p.battery_levels = int()?,
                "aoi_max" => p.aoi_max = int()?,
                "tau_max" => p.tau_max = int()?,
                "channel_levels" => p.channel_levels = int()?,
                "sampling_cost_quanta" => {
                    p.sampling_cost_quanta = int()?;
                    have_sampling_cost = true;
                }
                "path_gain_ref" => p.path_gain_ref = real()?,
                "path_loss_exp" => p.path_loss_exp = real()?,
                "distance_m" => p.distance_m = real()?,
                "slot_seconds" => p.slot_seconds = real()?,
                "quantization_mode" => {
                    p.quantization_mode = value.parse().map_err(|e: Error| cfg_err(e.to_string()))?
                }
                _ => return Err(cfg_err(format!("unknown key {key:?}"))),
            }
        }

        if !have_sampling_cost {
            return Err(Error::Config {
                line: 0,
                msg: "sampling_cost_quanta is required".into(),
            });
        }
        Ok(p)
    }
}
