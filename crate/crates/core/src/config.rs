//! Layered TOML configuration: named presets, then a file, then `key=value`
//! overrides. Values may carry unit suffixes and are converted to SI here.
//!
//! ```toml
//! preset = "pico+heavy"
//!
//! [network]
//! lambda_m = "5 per_km2"
//! zeta_b = 0.4
//!
//! [power]
//! p_st = "30 dBm"
//! ```
//!
//! Keys may be written bare (`lambda_m`) or qualified (`network.lambda_m`).
//! Bare numbers take the default unit of their key: W for powers, per km²
//! for densities, W/Gb for coding energies, Hz for bandwidth, dB for
//! shadowing and m for the simulation radius.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Conventions, Duplex, FddBackhaulServing, Network, PowerParams, SystemParams};
use crate::sim::{ChannelMode, SimConfig};
use crate::special::{dbm_to_watts, LognormalShadow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Power,
    Density,
    Energy,
    Bandwidth,
    Decibel,
    Length,
    Text,
}

const KEYS: &[(&str, Kind)] = &[
    ("network.lambda_m", Kind::Density),
    ("network.lambda_s", Kind::Density),
    ("network.lambda_u", Kind::Density),
    ("network.m_m", Kind::Int),
    ("network.m_s", Kind::Int),
    ("network.k_m", Kind::Int),
    ("network.k_s", Kind::Int),
    ("network.k_b", Kind::Int),
    ("network.beta_m", Kind::Float),
    ("network.beta_s", Kind::Float),
    ("network.beta_b", Kind::Float),
    ("network.alpha", Kind::Float),
    ("network.sigma2", Kind::Power),
    ("network.bandwidth", Kind::Bandwidth),
    ("network.zeta_b", Kind::Float),
    ("network.sigma_d", Kind::Decibel),
    ("network.sigma_b", Kind::Decibel),
    ("duplex.mode", Kind::Text),
    ("duplex.tau_m", Kind::Float),
    ("duplex.tau_s", Kind::Float),
    ("duplex.tau_b", Kind::Float),
    ("duplex.xi_d", Kind::Float),
    ("duplex.xi_b", Kind::Float),
    ("duplex.fdd_bh_serving", Kind::Text),
    ("duplex.fdd_ul_density", Kind::Density),
    ("conventions.macro_ue_sap_term_at_sap_power", Kind::Bool),
    ("conventions.small_ul_thinning_in_z", Kind::Bool),
    ("conventions.inflated_no_exclusion_constants", Kind::Bool),
    ("conventions.macro_ul_signal_at_mbs_power", Kind::Bool),
    ("conventions.backhaul_dl_scale_power_delta", Kind::Bool),
    ("power.p_mt", Kind::Power),
    ("power.p_st", Kind::Power),
    ("power.p_ut", Kind::Power),
    ("power.p_mb", Kind::Power),
    ("power.p_sb", Kind::Power),
    ("power.p_ma", Kind::Power),
    ("power.p_sa", Kind::Power),
    ("power.p_ua", Kind::Power),
    ("power.p_mf", Kind::Power),
    ("power.p_sf", Kind::Power),
    ("power.p_me", Kind::Energy),
    ("power.p_md", Kind::Energy),
    ("power.p_se", Kind::Energy),
    ("power.p_sd", Kind::Energy),
    ("power.p_ue", Kind::Energy),
    ("power.p_ud", Kind::Energy),
    ("sim.radius_m", Kind::Length),
    ("sim.replicates", Kind::Int),
    ("sim.seed", Kind::Int),
    ("sim.channel_mode", Kind::Text),
    ("sim.draws_per_replicate", Kind::Int),
    ("sim.max_resamples", Kind::Int),
];

const COMMON: &[(&str, &str)] = &[
    ("network.lambda_m", "5 per_km2"),
    ("network.lambda_u", "500 per_km2"),
    ("network.m_m", "100"),
    ("network.m_s", "4"),
    ("network.alpha", "3.8"),
    ("network.sigma2", "-104 dBm"),
    ("network.bandwidth", "10 MHz"),
    ("network.zeta_b", "0.5"),
    ("network.sigma_d", "6 dB"),
    ("network.sigma_b", "3 dB"),
    ("duplex.mode", "tdd"),
    ("duplex.tau_m", "0.5"),
    ("duplex.tau_s", "0.5"),
    ("duplex.tau_b", "0.5"),
    ("duplex.xi_d", "0.5"),
    ("duplex.xi_b", "0.5"),
    ("power.p_mt", "47.8 dBm"),
    ("power.p_ut", "17 dBm"),
    ("power.p_mb", "47.8 dBm"),
    ("power.p_ma", "1 W"),
    ("power.p_sa", "0.8 W"),
    ("power.p_ua", "0.1 W"),
    ("power.p_mf", "225 W"),
    ("power.p_me", "0.1 W_per_Gb"),
    ("power.p_md", "0.8 W_per_Gb"),
    ("power.p_se", "0.2 W_per_Gb"),
    ("power.p_sd", "1.6 W_per_Gb"),
    ("power.p_ue", "0.3 W_per_Gb"),
    ("power.p_ud", "2.4 W_per_Gb"),
];

const FEMTO: &[(&str, &str)] = &[
    ("power.p_st", "23.7 dBm"),
    ("power.p_sb", "23.7 dBm"),
    ("power.p_sf", "5.2 W"),
];

const PICO: &[(&str, &str)] = &[
    ("power.p_st", "30 dBm"),
    ("power.p_sb", "30 dBm"),
    ("power.p_sf", "7.3 W"),
];

const LIGHT: &[(&str, &str)] = &[
    ("network.beta_m", "0.25"),
    ("network.beta_s", "0.25"),
    ("network.beta_b", "0.25"),
];

const HEAVY: &[(&str, &str)] = &[
    ("network.beta_m", "0.9"),
    ("network.beta_s", "0.9"),
    ("network.beta_b", "0.9"),
];

/// Preset used when neither the command line nor the file names one.
pub const DEFAULT_PRESET: &str = "femto+light";

/// Names accepted in a preset expression such as `pico+heavy`.
pub const PRESET_NAMES: &[&str] = &["femto", "pico", "light", "heavy", "none"];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

/// Canonical `section.key` for a bare or qualified key.
pub fn canonical_key(key: &str) -> Result<&'static str> {
    let key = key.trim();
    KEYS.iter()
        .map(|(k, _)| *k)
        .find(|k| *k == key || k.split_once('.').is_some_and(|(_, bare)| bare == key))
        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))
}

fn preset_entries(expr: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let mut infra = None;
    let mut load = None;
    for name in expr.split(['+', ',']).map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "femto" | "pico" => infra = Some(name),
            "light" | "heavy" => load = Some(name),
            "none" => return Ok(Vec::new()),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{name}` (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
    }
    let mut out: Vec<_> = COMMON.to_vec();
    out.extend_from_slice(if infra == Some("pico") { PICO } else { FEMTO });
    out.extend_from_slice(if load == Some("heavy") { HEAVY } else { LIGHT });
    Ok(out)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let text = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => format!("{f:?}"),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(Error::Config(format!(
                    "key `{key}`: unsupported value {other}"
                )))
            }
        };
        out.push((key, text));
    }
    Ok(())
}

/// Parses TOML text into raw `(key, value)` entries, keeping the `preset`
/// key as is.
pub fn parse_toml(text: &str) -> Result<Vec<(String, String)>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("parse error: {e}")))?;
    let mut out = Vec::new();
    flatten("", &table, &mut out)?;
    Ok(out)
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().trim_matches('"').to_string()))
}

fn split_unit(key: &str, raw: &str) -> Result<(f64, String)> {
    let raw = raw.trim();
    let end = raw
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(raw.len());
    let (num, unit) = raw.split_at(end);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse number from `{raw}`")))?;
    Ok((value, unit.trim().to_string()))
}

fn convert(key: &str, kind: Kind, raw: &str) -> Result<f64> {
    let (v, unit) = split_unit(key, raw)?;
    let bad = || Error::Config(format!("key `{key}`: unknown unit `{unit}`"));
    Ok(match kind {
        Kind::Power => match unit.as_str() {
            "" | "W" => v,
            "mW" => v / 1e3,
            "dBm" => dbm_to_watts(v),
            "dBW" => 10f64.powf(v / 10.0),
            _ => return Err(bad()),
        },
        Kind::Density => match unit.as_str() {
            "" | "per_km2" => v / 1e6,
            "per_m2" => v,
            _ => return Err(bad()),
        },
        Kind::Energy => match unit.as_str() {
            "" | "W_per_Gb" => v / 1e9,
            "W_per_bps" => v,
            _ => return Err(bad()),
        },
        Kind::Bandwidth => match unit.as_str() {
            "" | "Hz" => v,
            "kHz" => v * 1e3,
            "MHz" => v * 1e6,
            "GHz" => v * 1e9,
            _ => return Err(bad()),
        },
        Kind::Decibel => match unit.as_str() {
            "" | "dB" => v,
            _ => return Err(bad()),
        },
        Kind::Length => match unit.as_str() {
            "" | "m" => v,
            "km" => v * 1e3,
            _ => return Err(bad()),
        },
        Kind::Float => {
            if !unit.is_empty() {
                return Err(bad());
            }
            v
        }
        Kind::Int | Kind::Bool | Kind::Text => unreachable!("not a quantity"),
    })
}

/// Layered raw values keyed by canonical name.
#[derive(Debug, Clone, Default)]
struct Layers {
    values: BTreeMap<&'static str, String>,
}

impl Layers {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = canonical_key(key)?;
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    fn raw(&self, key: &'static str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn require(&self, key: &'static str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn quantity(&self, key: &'static str) -> Result<f64> {
        convert(key, kind_of(key).unwrap(), self.require(key)?)
    }

    fn opt_quantity(&self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key) {
            Some("auto") | Some("none") | None => Ok(None),
            Some(r) => convert(key, kind_of(key).unwrap(), r).map(Some),
        }
    }

    fn int(&self, key: &'static str) -> Result<Option<u64>> {
        self.raw(key)
            .map(|r| {
                r.parse::<u64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: expected a non-negative integer, got `{r}`")))
            })
            .transpose()
    }

    fn flag(&self, key: &'static str) -> Result<bool> {
        match self.raw(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(r) => Err(Error::Config(format!("key `{key}`: expected true or false, got `{r}`"))),
        }
    }

    /// Count from an explicit `k_*` key or rounded from `beta_* × base`.
    fn count(&self, k_key: &'static str, beta_key: &'static str, base: usize) -> Result<usize> {
        if let Some(k) = self.int(k_key)? {
            return Ok(k as usize);
        }
        let beta = self.raw(beta_key).ok_or_else(|| {
            Error::Config(format!("missing required key `{k_key}` (or `{beta_key}`)"))
        })?;
        let beta = convert(beta_key, Kind::Float, beta)?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("key `{beta_key}`: must lie in (0, 1], got {beta}")));
        }
        let k = (beta * base as f64).round() as usize;
        if k == 0 {
            return Err(Error::Config(format!(
                "key `{beta_key}`: {beta} × {base} rounds to zero streams"
            )));
        }
        Ok(k)
    }
}

/// Fully resolved, validated inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub preset: String,
    pub params: SystemParams,
    pub powers: PowerParams,
    pub sim: SimConfig,
}

/// Where configuration values come from, in increasing precedence.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources<'a> {
    /// Preset expression; falls back to the file's `preset` key, then
    /// [`DEFAULT_PRESET`].
    pub preset: Option<&'a str>,
    pub file_text: Option<&'a str>,
    pub overrides: &'a [String],
}

/// Resolves presets, file and overrides into validated parameters.
///
/// When `lambda_s` is absent it is set to `k_b · lambda_m`, so every MBS
/// serves exactly `k_b` SAPs on average.
pub fn resolve(sources: &ConfigSources) -> Result<ResolvedConfig> {
    let file = sources.file_text.map(parse_toml).transpose()?.unwrap_or_default();
    let file_preset = file.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
    let preset = sources
        .preset
        .or(file_preset)
        .unwrap_or(DEFAULT_PRESET)
        .to_string();
    let mut layers = Layers::default();
    for (k, v) in preset_entries(&preset)? {
        layers.set(k, v)?;
    }
    for (k, v) in file.iter().filter(|(k, _)| k != "preset") {
        layers.set(k, v)?;
    }
    for o in sources.overrides {
        let (k, v) = parse_override(o)?;
        layers.set(&k, &v)?;
    }
    build(&layers, preset)
}

/// Reads and resolves a config file on top of its own (or the default) preset.
pub fn parse_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    resolve(&ConfigSources {
        file_text: Some(&text),
        ..Default::default()
    })
}

/// A named preset with no file or overrides.
pub fn preset(expr: &str) -> Result<ResolvedConfig> {
    resolve(&ConfigSources {
        preset: Some(expr),
        ..Default::default()
    })
}

fn build(l: &Layers, preset: String) -> Result<ResolvedConfig> {
    let m_m = l.int("network.m_m")?.ok_or_else(|| l.require("network.m_m").unwrap_err())? as usize;
    let m_s = l.int("network.m_s")?.ok_or_else(|| l.require("network.m_s").unwrap_err())? as usize;
    let k_m = l.count("network.k_m", "network.beta_m", m_m)?;
    let k_s = l.count("network.k_s", "network.beta_s", m_s)?;
    let k_b = l.count("network.k_b", "network.beta_b", m_m / m_s.max(1))?;
    let lambda_m = l.quantity("network.lambda_m")?;
    let lambda_s = l
        .opt_quantity("network.lambda_s")?
        .unwrap_or(k_b as f64 * lambda_m);
    let duplex = match l.require("duplex.mode")? {
        "tdd" => Duplex::Tdd {
            tau_m: l.quantity("duplex.tau_m")?,
            tau_s: l.quantity("duplex.tau_s")?,
            tau_b: l.quantity("duplex.tau_b")?,
        },
        "fdd" => Duplex::Fdd {
            xi_d: l.quantity("duplex.xi_d")?,
            xi_b: l.quantity("duplex.xi_b")?,
        },
        other => {
            return Err(Error::Config(format!(
                "key `duplex.mode`: expected tdd or fdd, got `{other}`"
            )))
        }
    };
    let fdd_bh_serving = match l.raw("duplex.fdd_bh_serving") {
        None | Some("uplink_nearest") => FddBackhaulServing::UplinkNearest,
        Some("backhaul") => FddBackhaulServing::Backhaul,
        Some(other) => {
            return Err(Error::Config(format!(
                "key `duplex.fdd_bh_serving`: expected uplink_nearest or backhaul, got `{other}`"
            )))
        }
    };
    let conventions = Conventions {
        macro_ue_sap_term_at_sap_power: l.flag("conventions.macro_ue_sap_term_at_sap_power")?,
        small_ul_thinning_in_z: l.flag("conventions.small_ul_thinning_in_z")?,
        inflated_no_exclusion_constants: l.flag("conventions.inflated_no_exclusion_constants")?,
        macro_ul_signal_at_mbs_power: l.flag("conventions.macro_ul_signal_at_mbs_power")?,
        backhaul_dl_scale_power_delta: l.flag("conventions.backhaul_dl_scale_power_delta")?,
        fdd_bh_serving,
        fdd_ul_density: l.opt_quantity("duplex.fdd_ul_density")?,
    };
    let shadow = |key| -> Result<LognormalShadow> {
        LognormalShadow::new(l.quantity(key)?).map_err(|e| Error::Config(format!("key `{key}`: {e}")))
    };
    let params = SystemParams {
        lambda_m,
        lambda_s,
        lambda_u: l.quantity("network.lambda_u")?,
        m_m,
        m_s,
        k_m,
        k_s,
        k_b,
        alpha: l.quantity("network.alpha")?,
        sigma2: l.quantity("network.sigma2")?,
        bandwidth: l.quantity("network.bandwidth")?,
        zeta_b: l.quantity("network.zeta_b")?,
        duplex,
        shadow_d: shadow("network.sigma_d")?,
        shadow_b: shadow("network.sigma_b")?,
        conventions,
    };
    let powers = PowerParams {
        p_mt: l.quantity("power.p_mt")?,
        p_st: l.quantity("power.p_st")?,
        p_ut: l.quantity("power.p_ut")?,
        p_mb: l.quantity("power.p_mb")?,
        p_sb: l.quantity("power.p_sb")?,
        p_ma: l.quantity("power.p_ma")?,
        p_sa: l.quantity("power.p_sa")?,
        p_ua: l.quantity("power.p_ua")?,
        p_mf: l.quantity("power.p_mf")?,
        p_sf: l.quantity("power.p_sf")?,
        p_me: l.quantity("power.p_me")?,
        p_md: l.quantity("power.p_md")?,
        p_se: l.quantity("power.p_se")?,
        p_sd: l.quantity("power.p_sd")?,
        p_ue: l.quantity("power.p_ue")?,
        p_ud: l.quantity("power.p_ud")?,
    };
    let defaults = SimConfig::default();
    let channel_mode = match l.raw("sim.channel_mode") {
        None | Some("gamma_effective") => ChannelMode::GammaEffective,
        Some("full_channel") => ChannelMode::FullChannel,
        Some(other) => {
            return Err(Error::Config(format!(
                "key `sim.channel_mode`: expected gamma_effective or full_channel, got `{other}`"
            )))
        }
    };
    let sim = SimConfig {
        radius_m: l.opt_quantity("sim.radius_m")?,
        replicates: l.int("sim.replicates")?.map_or(defaults.replicates, |v| v as usize),
        seed: l.int("sim.seed")?.unwrap_or(defaults.seed),
        channel_mode,
        draws_per_replicate: l
            .int("sim.draws_per_replicate")?
            .map_or(defaults.draws_per_replicate, |v| v as usize),
        max_resamples: l.int("sim.max_resamples")?.map_or(defaults.max_resamples, |v| v as usize),
    };
    params.validate()?;
    powers.validate()?;
    sim.validate()?;
    Ok(ResolvedConfig {
        preset,
        params,
        powers,
        sim,
    })
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl ResolvedConfig {
    pub fn network(&self) -> Result<Network> {
        Network::new(self.params.clone(), self.powers.clone())
    }

    /// Every resolved value as `(key, value)` in SI units with explicit
    /// suffixes. Fed back through [`resolve`] with preset `none`, it
    /// reproduces this configuration exactly.
    pub fn entries(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let w = &self.powers;
        let c = &p.conventions;
        let mut out: Vec<(&str, String)> = vec![
            ("network.lambda_m", format!("{} per_m2", num(p.lambda_m))),
            ("network.lambda_s", format!("{} per_m2", num(p.lambda_s))),
            ("network.lambda_u", format!("{} per_m2", num(p.lambda_u))),
            ("network.m_m", p.m_m.to_string()),
            ("network.m_s", p.m_s.to_string()),
            ("network.k_m", p.k_m.to_string()),
            ("network.k_s", p.k_s.to_string()),
            ("network.k_b", p.k_b.to_string()),
            ("network.alpha", num(p.alpha)),
            ("network.sigma2", format!("{} W", num(p.sigma2))),
            ("network.bandwidth", format!("{} Hz", num(p.bandwidth))),
            ("network.zeta_b", num(p.zeta_b)),
            ("network.sigma_d", format!("{} dB", num(p.shadow_d.sigma_db()))),
            ("network.sigma_b", format!("{} dB", num(p.shadow_b.sigma_db()))),
        ];
        match p.duplex {
            Duplex::Tdd { tau_m, tau_s, tau_b } => {
                out.push(("duplex.mode", "tdd".into()));
                out.push(("duplex.tau_m", num(tau_m)));
                out.push(("duplex.tau_s", num(tau_s)));
                out.push(("duplex.tau_b", num(tau_b)));
            }
            Duplex::Fdd { xi_d, xi_b } => {
                out.push(("duplex.mode", "fdd".into()));
                out.push(("duplex.xi_d", num(xi_d)));
                out.push(("duplex.xi_b", num(xi_b)));
            }
        }
        out.push((
            "duplex.fdd_bh_serving",
            match c.fdd_bh_serving {
                FddBackhaulServing::UplinkNearest => "uplink_nearest",
                FddBackhaulServing::Backhaul => "backhaul",
            }
            .into(),
        ));
        out.push((
            "duplex.fdd_ul_density",
            c.fdd_ul_density
                .map_or("auto".into(), |d| format!("{} per_m2", num(d))),
        ));
        for (k, v) in [
            ("conventions.macro_ue_sap_term_at_sap_power", c.macro_ue_sap_term_at_sap_power),
            ("conventions.small_ul_thinning_in_z", c.small_ul_thinning_in_z),
            ("conventions.inflated_no_exclusion_constants", c.inflated_no_exclusion_constants),
            ("conventions.macro_ul_signal_at_mbs_power", c.macro_ul_signal_at_mbs_power),
            ("conventions.backhaul_dl_scale_power_delta", c.backhaul_dl_scale_power_delta),
        ] {
            out.push((k, v.to_string()));
        }
        for (k, v) in [
            ("power.p_mt", w.p_mt),
            ("power.p_st", w.p_st),
            ("power.p_ut", w.p_ut),
            ("power.p_mb", w.p_mb),
            ("power.p_sb", w.p_sb),
            ("power.p_ma", w.p_ma),
            ("power.p_sa", w.p_sa),
            ("power.p_ua", w.p_ua),
            ("power.p_mf", w.p_mf),
            ("power.p_sf", w.p_sf),
        ] {
            out.push((k, format!("{} W", num(v))));
        }
        for (k, v) in [
            ("power.p_me", w.p_me),
            ("power.p_md", w.p_md),
            ("power.p_se", w.p_se),
            ("power.p_sd", w.p_sd),
            ("power.p_ue", w.p_ue),
            ("power.p_ud", w.p_ud),
        ] {
            out.push((k, format!("{} W_per_bps", num(v))));
        }
        let s = &self.sim;
        out.push((
            "sim.radius_m",
            s.radius_m.map_or("auto".into(), |r| format!("{} m", num(r))),
        ));
        out.push(("sim.replicates", s.replicates.to_string()));
        out.push(("sim.seed", s.seed.to_string()));
        out.push((
            "sim.channel_mode",
            match s.channel_mode {
                ChannelMode::GammaEffective => "gamma_effective",
                ChannelMode::FullChannel => "full_channel",
            }
            .into(),
        ));
        out.push(("sim.draws_per_replicate", s.draws_per_replicate.to_string()));
        out.push(("sim.max_resamples", s.max_resamples.to_string()));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The resolved configuration as `key=value` overrides for preset `none`.
    pub fn to_overrides(&self) -> Vec<String> {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::femto_light;

    #[test]
    fn femto_light_counts() {
        let c = preset("femto+light").unwrap();
        assert_eq!((c.params.k_m, c.params.k_s, c.params.k_b), (25, 1, 6));
        assert!((c.params.lambda_s - 30e-6).abs() < 1e-18);
        let h = preset("pico+heavy").unwrap();
        assert_eq!((h.params.k_m, h.params.k_s, h.params.k_b), (90, 4, 23));
        assert!((h.powers.p_st - 1.0).abs() < 1e-12);
        assert_eq!(h.powers.p_sf, 7.3);
    }

    #[test]
    fn presets_match_fixture() {
        let (p, w) = femto_light();
        let c = resolve(&ConfigSources {
            preset: Some("femto"),
            overrides: &["zeta_b=0.3".into(), "lambda_s=25".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.powers, w);
        assert_eq!(c.params.k_m, p.k_m);
        for (a, b) in [
            (c.params.lambda_m, p.lambda_m),
            (c.params.lambda_s, p.lambda_s),
            (c.params.lambda_u, p.lambda_u),
            (c.params.sigma2, p.sigma2),
            (c.params.bandwidth, p.bandwidth),
            (c.params.zeta_b, p.zeta_b),
        ] {
            assert!((a - b).abs() <= 1e-15 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn precedence() {
        let file = "preset = \"pico\"\n[network]\nzeta_b = 0.2\nalpha = 3.5\n";
        let overrides = vec!["network.zeta_b=0.7".to_string()];
        let c = resolve(&ConfigSources {
            preset: None,
            file_text: Some(file),
            overrides: &overrides,
        })
        .unwrap();
        assert_eq!(c.params.zeta_b, 0.7);
        assert_eq!(c.params.alpha, 3.5);
        assert_eq!(c.preset, "pico");
        assert_eq!(c.powers.p_sf, 7.3);
        let c = resolve(&ConfigSources {
            preset: Some("femto"),
            file_text: Some(file),
            overrides: &[],
        })
        .unwrap();
        assert_eq!(c.powers.p_sf, 5.2);
        assert_eq!(c.params.zeta_b, 0.2);
    }

    #[test]
    fn explicit_counts_override_fractions() {
        let c = resolve(&ConfigSources {
            overrides: &["k_b=3".into(), "beta_b=0.9".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.params.k_b, 3);
        assert!((c.params.lambda_s - 15e-6).abs() < 1e-18);
    }

    #[test]
    fn units() {
        assert!((convert("k", Kind::Power, "30 dBm").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(convert("k", Kind::Power, "2.5").unwrap(), 2.5);
        assert_eq!(convert("k", Kind::Power, "250mW").unwrap(), 0.25);
        assert_eq!(convert("k", Kind::Density, "5 per_km2").unwrap(), 5e-6);
        assert_eq!(convert("k", Kind::Density, "5e-6 per_m2").unwrap(), 5e-6);
        assert_eq!(convert("k", Kind::Energy, "0.8 W_per_Gb").unwrap(), 0.8e-9);
        assert_eq!(convert("k", Kind::Bandwidth, "10 MHz").unwrap(), 1e7);
        assert_eq!(convert("k", Kind::Bandwidth, "1e7").unwrap(), 1e7);
        assert_eq!(convert("k", Kind::Length, "1.5 km").unwrap(), 1500.0);
        assert!(convert("k", Kind::Power, "3 furlongs").is_err());
        assert!(convert("k", Kind::Float, "0.5 dB").is_err());
    }

    #[test]
    fn errors_name_the_key() {
        let err = resolve(&ConfigSources {
            preset: Some("none"),
            file_text: Some("[network]\nlambda_m = 5\n"),
            overrides: &[],
        })
        .unwrap_err();
        assert!(err.to_string().contains("network.m_m"), "{err}");
        let err = resolve(&ConfigSources {
            overrides: &["bogus=1".into()],
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = resolve(&ConfigSources {
            overrides: &["zeta_b=1.5".into()],
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("zeta_b"), "{err}");
        let err = resolve(&ConfigSources {
            file_text: Some("[network\n"),
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        assert!(preset("tiny").is_err());
    }

    #[test]
    fn dump_round_trips() {
        for p in ["femto+light", "pico+heavy"] {
            let mut overrides = vec!["mode=fdd".to_string(), "fdd_ul_density=3".to_string()];
            if p == "pico+heavy" {
                overrides.truncate(0);
            }
            let c = resolve(&ConfigSources {
                preset: Some(p),
                overrides: &overrides,
                ..Default::default()
            })
            .unwrap();
            let again = resolve(&ConfigSources {
                preset: Some("none"),
                overrides: &c.to_overrides(),
                ..Default::default()
            })
            .unwrap();
            assert_eq!(again.params, c.params);
            assert_eq!(again.powers, c.powers);
            assert_eq!(again.sim, c.sim);
        }
    }

    #[test]
    fn sim_section() {
        let c = resolve(&ConfigSources {
            file_text: Some("[sim]\nreplicates = 50\nseed = 9\nchannel_mode = \"full_channel\"\nradius_m = \"2 km\"\n"),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.sim.replicates, 50);
        assert_eq!(c.sim.seed, 9);
        assert_eq!(c.sim.channel_mode, ChannelMode::FullChannel);
        assert_eq!(c.sim.radius_m, Some(2000.0));
    }
}
