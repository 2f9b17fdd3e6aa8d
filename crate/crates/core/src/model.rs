//! Network parameters, their validation, and every derived constant the
//! rate expressions consume.
//!
//! All quantities are SI: densities per m², powers in W, coding energies in
//! W per bit/s, bandwidth in Hz. Unit conversion happens in the config layer.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{gamma, ln_gamma, LognormalShadow, PathLossLaw};

/// Duplexing scheme and its time or band fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Duplex {
    /// Dynamic TDD: each station transmits downlink with probability `tau_*`.
    Tdd { tau_m: f64, tau_s: f64, tau_b: f64 },
    /// FDD: `xi_d` of the access band and `xi_b` of the backhaul band carry downlink.
    Fdd { xi_d: f64, xi_b: f64 },
}

impl Duplex {
    pub fn is_fdd(&self) -> bool {
        matches!(self, Duplex::Fdd { .. })
    }
}

/// Which serving path-loss law weights the FDD backhaul uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FddBackhaulServing {
    /// Nearest-station law of the decoupled access uplink.
    #[default]
    UplinkNearest,
    /// The backhaul association law, consistent with the TDD backhaul.
    Backhaul,
}

/// Alternative readings of individual model constants.
///
/// The defaults are the self-consistent forms. Each flag switches one
/// constant to an alternative closed form so both can be evaluated side by
/// side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conventions {
    /// Evaluate the SAP term of the macro-UE interference at `z·P_st` instead of `z·P_mt`.
    pub macro_ue_sap_term_at_sap_power: bool,
    /// Use `1 - exp(-G_s z)` outside the UE-interference integral of the
    /// small-cell uplink instead of `1 - exp(-G_s u)` inside it.
    pub small_ul_thinning_in_z: bool,
    /// Multiply the no-exclusion base-station interference exponents by the
    /// extra constants `π Γ(1+δ)` (MBS receivers) and `Γ(1+δ)` (SAP receiver).
    pub inflated_no_exclusion_constants: bool,
    /// Scale the macro uplink signal with `P_mt` instead of `P_ut`.
    pub macro_ul_signal_at_mbs_power: bool,
    /// Use `a_b^δ` instead of `a_b^(1/δ)` in the backhaul downlink signal.
    pub backhaul_dl_scale_power_delta: bool,
    pub fdd_bh_serving: FddBackhaulServing,
    /// Replaces the FDD uplink interferer density (per m²) when set.
    pub fdd_ul_density: Option<f64>,
}

/// Raw network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub m_m: usize,
    pub m_s: usize,
    pub k_m: usize,
    pub k_s: usize,
    pub k_b: usize,
    pub alpha: f64,
    /// Noise power in W.
    pub sigma2: f64,
    /// Total bandwidth in Hz.
    pub bandwidth: f64,
    pub zeta_b: f64,
    pub duplex: Duplex,
    pub shadow_d: LognormalShadow,
    pub shadow_b: LognormalShadow,
    pub conventions: Conventions,
}

fn fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {x}")))
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be >= 0 and finite, got {x}")))
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        positive("lambda_m", self.lambda_m)?;
        nonnegative("lambda_s", self.lambda_s)?;
        positive("lambda_u", self.lambda_u)?;
        if self.m_m == 0 || self.m_s == 0 {
            return Err(Error::InvalidParams("antenna counts must be >= 1".into()));
        }
        if self.k_m == 0 || self.k_s == 0 || self.k_b == 0 {
            return Err(Error::InvalidParams("served counts k_m, k_s, k_b must be >= 1".into()));
        }
        if self.k_m >= self.m_m {
            return Err(Error::InvalidParams(format!(
                "k_m < m_m required for a positive macro load margin, got k_m={} m_m={}",
                self.k_m, self.m_m
            )));
        }
        if self.k_s > self.m_s {
            return Err(Error::InvalidParams(format!(
                "k_s <= m_s required, got k_s={} m_s={}",
                self.k_s, self.m_s
            )));
        }
        if self.k_b * self.m_s >= self.m_m {
            return Err(Error::InvalidParams(format!(
                "k_b * m_s < m_m required, got {} * {} >= {}",
                self.k_b, self.m_s, self.m_m
            )));
        }
        if !(self.alpha > 2.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "alpha must exceed 2, got {}",
                self.alpha
            )));
        }
        nonnegative("sigma2", self.sigma2)?;
        positive("bandwidth", self.bandwidth)?;
        fraction("zeta_b", self.zeta_b)?;
        match self.duplex {
            Duplex::Tdd { tau_m, tau_s, tau_b } => {
                fraction("tau_m", tau_m)?;
                fraction("tau_s", tau_s)?;
                fraction("tau_b", tau_b)?;
            }
            Duplex::Fdd { xi_d, xi_b } => {
                fraction("xi_d", xi_d)?;
                fraction("xi_b", xi_b)?;
            }
        }
        if let Some(d) = self.conventions.fdd_ul_density {
            nonnegative("fdd_ul_density", d)?;
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        2.0 / self.alpha
    }
}

/// Transmit, circuit and coding power constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerParams {
    pub p_mt: f64,
    pub p_st: f64,
    pub p_ut: f64,
    pub p_mb: f64,
    pub p_sb: f64,
    pub p_ma: f64,
    pub p_sa: f64,
    pub p_ua: f64,
    pub p_mf: f64,
    pub p_sf: f64,
    pub p_me: f64,
    pub p_md: f64,
    pub p_se: f64,
    pub p_sd: f64,
    pub p_ue: f64,
    pub p_ud: f64,
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        positive("p_mt", self.p_mt)?;
        positive("p_st", self.p_st)?;
        for (name, v) in [
            ("p_ut", self.p_ut),
            ("p_mb", self.p_mb),
            ("p_sb", self.p_sb),
            ("p_ma", self.p_ma),
            ("p_sa", self.p_sa),
            ("p_ua", self.p_ua),
            ("p_mf", self.p_mf),
            ("p_sf", self.p_sf),
            ("p_me", self.p_me),
            ("p_md", self.p_md),
            ("p_se", self.p_se),
            ("p_sd", self.p_sd),
            ("p_ue", self.p_ue),
            ("p_ud", self.p_ud),
        ] {
            nonnegative(name, v)?;
        }
        Ok(())
    }
}

/// Fraction of stations of each tier transmitting in each direction on the
/// band a link uses. TDD uses the downlink probabilities; under FDD every
/// station is active on both bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activity {
    pub m_dl: f64,
    pub s_dl: f64,
    pub b_dl: f64,
    pub m_ul: f64,
    pub s_ul: f64,
    pub b_ul: f64,
}

/// Derived symbols shared by the rate and power expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedModel {
    pub delta: f64,
    pub beta_m: f64,
    pub beta_s: f64,
    pub beta_b: f64,
    /// `E[S_D^δ]`.
    pub e_sd_delta: f64,
    /// `E[S_B^δ]`.
    pub e_sb_delta: f64,
    pub a_m: f64,
    pub a_s: f64,
    pub a_b: f64,
    pub g_m: f64,
    pub g_s: f64,
    /// Nearest-station scale `(λ_s + λ_m) π E[S_D^δ]` of the decoupled uplink.
    pub g_u: f64,
    pub lambda_u_tilde: f64,
    /// Probability that a UE associates with an MBS.
    pub assoc_m: f64,
    pub assoc_s: f64,
    pub nu_m_d: f64,
    pub nu_m_u: f64,
    pub nu_b_d: f64,
    pub nu_b_u: f64,
    pub delta_s: usize,
    pub activity: Activity,
}

/// `(A_m, A_s)` under maximum average received power association.
pub fn association_probabilities(params: &SystemParams, powers: &PowerParams) -> (f64, f64) {
    let d = params.delta();
    let wm = params.lambda_m * powers.p_mt.powf(d);
    let ws = params.lambda_s * powers.p_st.powf(d);
    let total = wm + ws;
    let a_m = wm / total;
    (a_m, 1.0 - a_m)
}

pub fn derive(params: &SystemParams, powers: &PowerParams) -> Result<DerivedModel> {
    params.validate()?;
    powers.validate()?;
    let c = &params.conventions;
    let delta = params.delta();
    let beta_m = params.k_m as f64 / params.m_m as f64;
    let beta_s = params.k_s as f64 / params.m_s as f64;
    let beta_b = (params.k_b * params.m_s) as f64 / params.m_m as f64;
    let e_sd_delta = params.shadow_d.moment(delta);
    let e_sb_delta = params.shadow_b.moment(delta);
    let a_m = params.lambda_m * PI * e_sd_delta;
    let a_s = params.lambda_s * PI * e_sd_delta;
    let a_b = params.lambda_m * PI * e_sb_delta;
    let g_m = a_m + a_s * (powers.p_st / powers.p_mt).powf(delta);
    let g_s = a_s + a_m * (powers.p_mt / powers.p_st).powf(delta);
    let g_u = (params.lambda_s + params.lambda_m) * PI * e_sd_delta;

    let activity = match params.duplex {
        Duplex::Tdd { tau_m, tau_s, tau_b } => Activity {
            m_dl: tau_m,
            s_dl: tau_s,
            b_dl: tau_b,
            m_ul: 1.0 - tau_m,
            s_ul: 1.0 - tau_s,
            b_ul: 1.0 - tau_b,
        },
        Duplex::Fdd { .. } => Activity {
            m_dl: 1.0,
            s_dl: 1.0,
            b_dl: 1.0,
            m_ul: 1.0,
            s_ul: 1.0,
            b_ul: 1.0,
        },
    };
    let lambda_u_tilde = match (params.duplex, c.fdd_ul_density) {
        (Duplex::Fdd { .. }, Some(d)) => d,
        _ => {
            activity.m_ul * params.lambda_m * params.k_m as f64
                + activity.s_ul * params.lambda_s * params.k_s as f64
        }
    };
    let (assoc_m, assoc_s) = association_probabilities(params, powers);

    let inv_delta = 1.0 / delta;
    let g_mean = gamma(1.0 + inv_delta);
    let nu_m_d = powers.p_mt * (1.0 - beta_m) * g_m.powf(inv_delta) / (beta_m * g_mean);
    let ul_power = if c.macro_ul_signal_at_mbs_power {
        powers.p_mt
    } else {
        powers.p_ut
    };
    let nu_m_u = (1.0 - beta_m) * params.m_m as f64 * ul_power;
    let bh_exp = if c.backhaul_dl_scale_power_delta {
        delta
    } else {
        inv_delta
    };
    let nu_b_d = powers.p_mb * (1.0 - beta_b) * a_b.powf(bh_exp) / (beta_b * g_mean);
    let nu_b_u = (1.0 - beta_b) * params.m_m as f64 * powers.p_sb;

    Ok(DerivedModel {
        delta,
        beta_m,
        beta_s,
        beta_b,
        e_sd_delta,
        e_sb_delta,
        a_m,
        a_s,
        a_b,
        g_m,
        g_s,
        g_u,
        lambda_u_tilde,
        assoc_m,
        assoc_s,
        nu_m_d,
        nu_m_u,
        nu_b_d,
        nu_b_u,
        delta_s: params.m_s - params.k_s + 1,
        activity,
    })
}

/// Validated parameters together with their derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub params: SystemParams,
    pub powers: PowerParams,
    pub derived: DerivedModel,
}

impl Network {
    pub fn new(params: SystemParams, powers: PowerParams) -> Result<Self> {
        let derived = derive(&params, &powers)?;
        Ok(Self {
            params,
            powers,
            derived,
        })
    }

    /// Rebuilds with modified parameters.
    pub fn with(&self, edit: impl FnOnce(&mut SystemParams, &mut PowerParams)) -> Result<Self> {
        let mut params = self.params.clone();
        let mut powers = self.powers.clone();
        edit(&mut params, &mut powers);
        Self::new(params, powers)
    }

    /// Serving path-loss law of a UE attached to an MBS.
    pub fn macro_law(&self) -> PathLossLaw {
        PathLossLaw {
            scale: self.derived.g_m,
            delta: self.derived.delta,
        }
    }

    /// Serving path-loss law of a UE attached to a SAP.
    pub fn small_law(&self) -> PathLossLaw {
        PathLossLaw {
            scale: self.derived.g_s,
            delta: self.derived.delta,
        }
    }

    /// Backhaul path-loss law between a SAP and its MBS.
    pub fn backhaul_law(&self) -> PathLossLaw {
        PathLossLaw {
            scale: self.derived.a_b,
            delta: self.derived.delta,
        }
    }

    /// Nearest-station law of the decoupled FDD uplink.
    pub fn uplink_law(&self) -> PathLossLaw {
        PathLossLaw {
            scale: self.derived.g_u,
            delta: self.derived.delta,
        }
    }
}

/// Mean number of UEs in a macro cell, `A_m λ_u / λ_m`.
pub fn mean_macro_load(params: &SystemParams, powers: &PowerParams) -> f64 {
    let (a_m, _) = association_probabilities(params, powers);
    a_m * params.lambda_u / params.lambda_m
}

const LOAD_SHAPE: f64 = 3.5;

/// Probability that a macro cell holds `n` UEs, for mean load `mu`.
///
/// Negative binomial with shape 3.5:
/// `3.5^3.5 Γ(n+3.5) μ^n / (Γ(3.5) n! (μ+3.5)^(n+3.5))`.
pub fn cell_load_pmf(n: usize, mu: f64) -> f64 {
    if mu <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let k = LOAD_SHAPE;
    let nf = n as f64;
    let ln = k * k.ln() + ln_gamma(nf + k) + nf * mu.ln()
        - ln_gamma(k)
        - ln_gamma(nf + 1.0)
        - (nf + k) * (mu + k).ln();
    ln.exp()
}

/// Exact probability that a macro cell holds fewer than `k` UEs, and the
/// closed-form upper bound `(2λ_m/λ_u)^3.5 Σ_{n<k} Γ(n+3.5) 3.5^3.5 / (n! Γ(3.5))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Underload {
    pub exact: f64,
    pub bound: f64,
}

pub fn underload_probability(k: usize, params: &SystemParams, powers: &PowerParams) -> Underload {
    let mu = mean_macro_load(params, powers);
    let exact = (0..k).map(|n| cell_load_pmf(n, mu)).sum::<f64>().min(1.0);
    let shape = LOAD_SHAPE;
    let lead = (2.0 * params.lambda_m / params.lambda_u).powf(shape);
    let sum: f64 = (0..k)
        .map(|n| {
            let nf = n as f64;
            (ln_gamma(nf + shape) - ln_gamma(nf + 1.0) + shape * shape.ln() - ln_gamma(shape)).exp()
        })
        .sum();
    Underload {
        exact,
        bound: lead * sum,
    }
}
