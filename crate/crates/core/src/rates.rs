//! Interference Laplace transforms, the six link spectral efficiencies for
//! TDD and FDD, and the per-area sum rate.
//!
//! Every rate has the form
//! `pref/ln2 ∫_0^∞ e^{-σ²z}/z · kernel(z) · L_I(z) dz`, where the kernel
//! carries the serving signal and `L_I` the interference. Serving path-loss
//! averages are taken in the variable `y = G t^δ`, which is `Exp(1)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Duplex, FddBackhaulServing, Network};
use crate::quadrature::{try_integrate_log_scaled, try_integrate_semi_infinite_scaled, QuadConfig};
use crate::special::{c_alpha_k, gamma, gamma_ratio, PathLossLaw};
use std::f64::consts::{LN_2, PI};

/// The six links of the two-tier network with wireless backhaul.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    MacroDl,
    MacroUl,
    SmallDl,
    SmallUl,
    BackhaulDl,
    BackhaulUl,
}

impl Link {
    pub const ALL: [Link; 6] = [
        Link::MacroDl,
        Link::MacroUl,
        Link::SmallDl,
        Link::SmallUl,
        Link::BackhaulDl,
        Link::BackhaulUl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Link::MacroDl => "macro_dl",
            Link::MacroUl => "macro_ul",
            Link::SmallDl => "small_dl",
            Link::SmallUl => "small_ul",
            Link::BackhaulDl => "backhaul_dl",
            Link::BackhaulUl => "backhaul_ul",
        }
    }

    pub fn is_backhaul(&self) -> bool {
        matches!(self, Link::BackhaulDl | Link::BackhaulUl)
    }

    pub fn is_downlink(&self) -> bool {
        matches!(self, Link::MacroDl | Link::SmallDl | Link::BackhaulDl)
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Interference processes whose Laplace transforms enter the rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaplaceKind {
    /// Uplink UEs interfering at a downlink UE.
    UeDl,
    /// Downlink base stations interfering at a macro UE, given its serving path loss.
    OcMacroUe,
    /// Downlink base stations interfering at a small-cell UE, given its serving path loss.
    OcSmallUe,
    /// Downlink base stations interfering at an uplink receiver.
    MbsUl,
    /// Uplink UEs interfering at an MBS.
    UeUlMacro,
    /// Uplink UEs interfering at a SAP.
    UeUlSmall,
    /// Backhaul-uplink SAPs interfering at a backhaul-downlink SAP.
    BhSapOnDl,
    /// Backhaul-downlink MBSs interfering at a SAP, given its backhaul path loss.
    BhMbsDl,
    /// Backhaul-downlink MBSs interfering at a backhaul-uplink MBS.
    BhMbsUl,
    /// Backhaul-uplink SAPs of other cells interfering at an MBS.
    BhSapUl,
}

impl LaplaceKind {
    pub const ALL: [LaplaceKind; 10] = [
        LaplaceKind::UeDl,
        LaplaceKind::OcMacroUe,
        LaplaceKind::OcSmallUe,
        LaplaceKind::MbsUl,
        LaplaceKind::UeUlMacro,
        LaplaceKind::UeUlSmall,
        LaplaceKind::BhSapOnDl,
        LaplaceKind::BhMbsDl,
        LaplaceKind::BhMbsUl,
        LaplaceKind::BhSapUl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LaplaceKind::UeDl => "ue_dl",
            LaplaceKind::OcMacroUe => "oc_macro_ue",
            LaplaceKind::OcSmallUe => "oc_small_ue",
            LaplaceKind::MbsUl => "mbs_ul",
            LaplaceKind::UeUlMacro => "ue_ul_macro",
            LaplaceKind::UeUlSmall => "ue_ul_small",
            LaplaceKind::BhSapOnDl => "bh_sap_on_dl",
            LaplaceKind::BhMbsDl => "bh_mbs_dl",
            LaplaceKind::BhMbsUl => "bh_mbs_ul",
            LaplaceKind::BhSapUl => "bh_sap_ul",
        }
    }

    /// Whether the transform is conditioned on the serving path loss.
    pub fn is_conditional(&self) -> bool {
        matches!(
            self,
            LaplaceKind::OcMacroUe | LaplaceKind::OcSmallUe | LaplaceKind::BhMbsDl
        )
    }
}

/// `a·C_{α,K}(z·p_arg, t)·(z·p/K)^δ`: a Γ(K)-faded tier outside the exclusion set by `t`.
fn tier_excluded(
    a: f64,
    p_arg: f64,
    p: f64,
    k: usize,
    z: f64,
    t: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    if a == 0.0 || p == 0.0 {
        return Ok(0.0);
    }
    let c = c_alpha_k(z * p_arg, t, k, alpha)?;
    Ok(a * c * (z * p / k as f64).powf(delta))
}

/// `a·Γ(1-δ)·Γ(K+δ)/Γ(K)·(z·p/K)^δ`: a Γ(K)-faded tier with no exclusion.
fn tier_open(a: f64, p: f64, k: usize, z: f64, delta: f64) -> f64 {
    if a == 0.0 || p == 0.0 {
        return 0.0;
    }
    a * gamma(1.0 - delta) * gamma_ratio(k, delta) * (z * p / k as f64).powf(delta)
}

/// `h(κ) = ∫_0^∞ (1 - e^{-κv}) / (1 + v^{1/δ}) dv`.
fn ue_thinning_integral(kappa: f64, delta: f64, cfg: &QuadConfig) -> Result<f64> {
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let inv = 1.0 / delta;
    let r = try_integrate_log_scaled(
        |v| Ok(-(-kappa * v).exp_m1() / (1.0 + v.powf(inv))),
        1.0f64.min(1.0 / kappa).max(1e-3),
        3.0,
        cfg,
        "ue uplink interference",
    )?;
    Ok(r.value)
}

/// Exponent of the uplink UE interference at a receiver whose own UEs
/// associate with scale `g`.
fn ue_ul_exponent(net: &Network, g: f64, z: f64, cfg: &QuadConfig) -> Result<f64> {
    let d = &net.derived;
    let lead = d.lambda_u_tilde * PI * d.e_sd_delta;
    if lead == 0.0 || net.powers.p_ut == 0.0 {
        return Ok(0.0);
    }
    let s = (z * net.powers.p_ut).powf(d.delta);
    Ok(lead * s * ue_thinning_integral(g * s, d.delta, cfg)?)
}

fn bh_sap_ul_exponent(net: &Network, z: f64, cfg: &QuadConfig) -> Result<f64> {
    let d = &net.derived;
    let p = &net.params;
    let lead = d.activity.b_ul * p.k_b as f64 * d.a_b;
    if lead == 0.0 || net.powers.p_sb == 0.0 {
        return Ok(0.0);
    }
    let m = p.m_s as f64;
    let s = (z * net.powers.p_sb / m).powf(d.delta);
    let kappa = d.a_b * s;
    let inv = 1.0 / d.delta;
    let r = try_integrate_log_scaled(
        |v| {
            let fade = -(-m * v.powf(-inv).ln_1p()).exp_m1();
            Ok(fade * -(-kappa * v).exp_m1())
        },
        1.0f64.min(1.0 / kappa).max(1e-3),
        3.0,
        cfg,
        "backhaul uplink SAP interference",
    )?;
    Ok(lead * s * r.value)
}

/// `-ln E[e^{-zI}]` for the given interference process.
///
/// `t` is the serving path loss and must be given for conditional kinds.
/// Kinds with an interior integral evaluate it at the tolerance `cfg`.
pub fn laplace_exponent(
    kind: LaplaceKind,
    z: f64,
    t: Option<f64>,
    net: &Network,
    cfg: &QuadConfig,
) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(
            "interference_laplace",
            format!("Laplace argument must be finite and >= 0, got {z}"),
        ));
    }
    let serving = || -> Result<f64> {
        match t {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(Error::domain(
                "interference_laplace",
                format!("serving path loss must be positive, got {t}"),
            )),
            None => Err(Error::InvalidParams(format!(
                "{} requires the serving path loss",
                kind.name()
            ))),
        }
    };
    if z == 0.0 {
        if kind.is_conditional() {
            serving()?;
        }
        return Ok(0.0);
    }
    let d = &net.derived;
    let p = &net.params;
    let w = &net.powers;
    let c = &p.conventions;
    let act = d.activity;
    let delta = d.delta;
    let alpha = p.alpha;
    let open_extra = if c.inflated_no_exclusion_constants {
        PI * gamma(1.0 + delta)
    } else {
        1.0
    };
    match kind {
        LaplaceKind::UeDl => Ok(d.lambda_u_tilde
            * PI
            * d.e_sd_delta
            * gamma(1.0 + delta)
            * gamma(1.0 - delta)
            * (z * w.p_ut).powf(delta)),
        LaplaceKind::OcMacroUe => {
            let t = serving()?;
            let sap_arg = if c.macro_ue_sap_term_at_sap_power {
                w.p_st
            } else {
                w.p_mt
            };
            let macro_term =
                tier_excluded(act.m_dl * d.a_m, w.p_mt, w.p_mt, p.k_m, z, t, alpha, delta)?;
            let small_term =
                tier_excluded(act.s_dl * d.a_s, sap_arg, w.p_st, p.k_s, z, t, alpha, delta)?;
            Ok(macro_term + small_term)
        }
        LaplaceKind::OcSmallUe => {
            let t = serving()?;
            let small_term =
                tier_excluded(act.s_dl * d.a_s, w.p_st, w.p_st, p.k_s, z, t, alpha, delta)?;
            let macro_term =
                tier_excluded(act.m_dl * d.a_m, w.p_st, w.p_mt, p.k_m, z, t, alpha, delta)?;
            Ok(small_term + macro_term)
        }
        LaplaceKind::MbsUl => Ok(open_extra
            * (tier_open(act.m_dl * d.a_m, w.p_mt, p.k_m, z, delta)
                + tier_open(act.s_dl * d.a_s, w.p_st, p.k_s, z, delta))),
        LaplaceKind::UeUlMacro => ue_ul_exponent(net, d.g_m, z, cfg),
        LaplaceKind::UeUlSmall => {
            if c.small_ul_thinning_in_z {
                let s = (z * w.p_ut).powf(delta);
                Ok(d.lambda_u_tilde
                    * PI
                    * d.e_sd_delta
                    * -(-d.g_s * z).exp_m1()
                    * s
                    * gamma(1.0 + delta)
                    * gamma(1.0 - delta))
            } else {
                ue_ul_exponent(net, d.g_s, z, cfg)
            }
        }
        LaplaceKind::BhSapOnDl => {
            let extra = if c.inflated_no_exclusion_constants {
                gamma(1.0 + delta)
            } else {
                1.0
            };
            let a = act.b_ul * p.lambda_s * PI * d.e_sb_delta;
            Ok(extra * tier_open(a, w.p_sb, p.m_s, z, delta))
        }
        LaplaceKind::BhMbsDl => {
            let t = serving()?;
            let k = p.k_b * p.m_s;
            tier_excluded(act.b_dl * d.a_b, w.p_mb, w.p_mb, k, z, t, alpha, delta)
        }
        LaplaceKind::BhMbsUl => {
            Ok(open_extra * tier_open(act.b_dl * d.a_b, w.p_mb, p.k_b * p.m_s, z, delta))
        }
        LaplaceKind::BhSapUl => bh_sap_ul_exponent(net, z, cfg),
    }
}

/// `E[e^{-zI}]` for the given interference process, in `(0, 1]`.
pub fn interference_laplace(kind: LaplaceKind, z: f64, t: Option<f64>, net: &Network) -> Result<f64> {
    let cfg = QuadConfig::default().tighter();
    Ok((-laplace_exponent(kind, z, t, net, &cfg)?).exp())
}

/// `E[g(L)]` for the serving path-loss law, integrated in `y = G L^δ`.
fn serving_average<F>(law: PathLossLaw, mut g: F, cfg: &QuadConfig, context: &str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = try_integrate_semi_infinite_scaled(
        |y| {
            let t = law.from_exponential(y);
            if t == 0.0 {
                return Ok(0.0);
            }
            Ok(g(t)? * (-y).exp())
        },
        1.0,
        cfg,
        context,
    )?;
    Ok(r.value)
}

/// `1/ln2 ∫_0^∞ e^{-σ²z}/z · f(z) dz` on a logarithmic grid centered
/// between the signal onset `1/nu` and the noise cutoff.
fn rate_shell<F>(mut f: F, nu: f64, sigma2: f64, cfg: &QuadConfig, context: &str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let z_lo = 1.0 / nu;
    let z_hi = if sigma2 > 0.0 { 1.0 / sigma2 } else { 1e6 * z_lo };
    let z_hi = z_hi.max(z_lo);
    let center = (z_lo * z_hi).sqrt();
    let width = ((z_hi / z_lo).ln() / 4.0).max(2.0);
    let r = try_integrate_log_scaled(
        |z| {
            let noise = (-sigma2 * z).exp();
            if noise == 0.0 {
                return Ok(0.0);
            }
            Ok(noise * f(z)? / z)
        },
        center,
        width,
        cfg,
        context,
    )?;
    Ok(r.value / LN_2)
}

fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `1 - (1+x)^{-n}`.
fn one_minus_pow(x: f64, n: f64) -> f64 {
    -(-n * x.ln_1p()).exp_m1()
}

fn fdd_fractions(net: &Network) -> Option<(f64, f64)> {
    match net.params.duplex {
        Duplex::Fdd { xi_d, xi_b } => Some((xi_d, xi_b)),
        Duplex::Tdd { .. } => None,
    }
}

/// Spectral efficiency of `link` without the bandwidth-split factor
/// (`1-ζ_b` on access links, `ζ_b M_s/K_s` on backhaul links). FDD band
/// fractions are included.
pub fn link_rate_base(link: Link, net: &Network, cfg: &QuadConfig) -> Result<f64> {
    let d = &net.derived;
    let p = &net.params;
    let w = &net.powers;
    let inner = cfg.tighter();
    let innermost = inner.tighter();
    let fdd = fdd_fractions(net);
    let delta = d.delta;
    let sigma2 = p.sigma2;
    let exp_of = |kind, z, t| -> Result<f64> {
        Ok((-laplace_exponent(kind, z, t, net, &innermost)?).exp())
    };
    let inv_delta = 1.0 / delta;
    let delta_s = d.delta_s as f64;
    let ctx = link.name();
    let value = match link {
        Link::MacroDl => {
            let nu = d.nu_m_d;
            if nu == 0.0 {
                return Ok(0.0);
            }
            let law = net.macro_law();
            let shell = rate_shell(
                |z| {
                    let signal = one_minus_exp(z * nu);
                    let ue = if fdd.is_some() {
                        1.0
                    } else {
                        exp_of(LaplaceKind::UeDl, z, None)?
                    };
                    if ue == 0.0 {
                        return Ok(0.0);
                    }
                    let oc = serving_average(
                        law,
                        |t| exp_of(LaplaceKind::OcMacroUe, z, Some(t)),
                        &inner,
                        ctx,
                    )?;
                    Ok(signal * ue * oc)
                },
                nu,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(xi_d, _)| xi_d) * shell
        }
        Link::MacroUl => {
            let nu = d.nu_m_u;
            let law = if fdd.is_some() {
                net.uplink_law()
            } else {
                net.macro_law()
            };
            let nu_typ = nu * law.scale.powf(inv_delta);
            if nu_typ == 0.0 {
                return Ok(0.0);
            }
            let shell = rate_shell(
                |z| {
                    let mut lt = exp_of(LaplaceKind::UeUlMacro, z, None)?;
                    if fdd.is_none() {
                        lt *= exp_of(LaplaceKind::MbsUl, z, None)?;
                    }
                    if lt == 0.0 {
                        return Ok(0.0);
                    }
                    let k = serving_average(law, |t| Ok(one_minus_exp(z * nu / t)), &inner, ctx)?;
                    Ok(k * lt)
                },
                nu_typ,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(xi_d, _)| 1.0 - xi_d) * shell
        }
        Link::SmallDl => {
            let law = net.small_law();
            let ks = p.k_s as f64;
            let nu_typ = w.p_st / ks * law.scale.powf(inv_delta) * delta_s;
            let shell = rate_shell(
                |z| {
                    let ue = if fdd.is_some() {
                        1.0
                    } else {
                        exp_of(LaplaceKind::UeDl, z, None)?
                    };
                    if ue == 0.0 {
                        return Ok(0.0);
                    }
                    let avg = serving_average(
                        law,
                        |t| {
                            let k = one_minus_pow(z * w.p_st / (t * ks), delta_s);
                            if k == 0.0 {
                                return Ok(0.0);
                            }
                            Ok(k * exp_of(LaplaceKind::OcSmallUe, z, Some(t))?)
                        },
                        &inner,
                        ctx,
                    )?;
                    Ok(ue * avg)
                },
                nu_typ,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(xi_d, _)| xi_d) * shell
        }
        Link::SmallUl => {
            let law = if fdd.is_some() {
                net.uplink_law()
            } else {
                net.small_law()
            };
            let nu_typ = w.p_ut * law.scale.powf(inv_delta) * delta_s;
            if nu_typ == 0.0 {
                return Ok(0.0);
            }
            let shell = rate_shell(
                |z| {
                    let mut lt = exp_of(LaplaceKind::UeUlSmall, z, None)?;
                    if fdd.is_none() {
                        lt *= exp_of(LaplaceKind::MbsUl, z, None)?;
                    }
                    if lt == 0.0 {
                        return Ok(0.0);
                    }
                    let k = serving_average(
                        law,
                        |t| Ok(one_minus_pow(z * w.p_ut / t, delta_s)),
                        &inner,
                        ctx,
                    )?;
                    Ok(k * lt)
                },
                nu_typ,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(xi_d, _)| 1.0 - xi_d) * shell
        }
        Link::BackhaulDl => {
            let nu = d.nu_b_d;
            if nu == 0.0 {
                return Ok(0.0);
            }
            let law = net.backhaul_law();
            let shell = rate_shell(
                |z| {
                    let sap = if fdd.is_some() {
                        1.0
                    } else {
                        exp_of(LaplaceKind::BhSapOnDl, z, None)?
                    };
                    if sap == 0.0 {
                        return Ok(0.0);
                    }
                    let mbs = serving_average(
                        law,
                        |t| exp_of(LaplaceKind::BhMbsDl, z, Some(t)),
                        &inner,
                        ctx,
                    )?;
                    Ok(one_minus_exp(z * nu) * sap * mbs)
                },
                nu,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(_, xi_b)| xi_b) * shell
        }
        Link::BackhaulUl => {
            let nu = d.nu_b_u;
            let law = match (fdd, p.conventions.fdd_bh_serving) {
                (Some(_), FddBackhaulServing::UplinkNearest) => net.uplink_law(),
                _ => net.backhaul_law(),
            };
            let nu_typ = nu * law.scale.powf(inv_delta);
            if nu_typ == 0.0 {
                return Ok(0.0);
            }
            let shell = rate_shell(
                |z| {
                    let mut lt = exp_of(LaplaceKind::BhSapUl, z, None)?;
                    if fdd.is_none() {
                        lt *= exp_of(LaplaceKind::BhMbsUl, z, None)?;
                    }
                    if lt == 0.0 {
                        return Ok(0.0);
                    }
                    let k = serving_average(law, |t| Ok(one_minus_exp(z * nu / t)), &inner, ctx)?;
                    Ok(k * lt)
                },
                nu_typ,
                sigma2,
                cfg,
                ctx,
            )?;
            fdd.map_or(1.0, |(_, xi_b)| 1.0 - xi_b) * shell
        }
    };
    Ok(value)
}

/// Bandwidth-split factor of a link: `1-ζ_b` for access, `ζ_b M_s/K_s` for backhaul.
pub fn zeta_prefactor(link: Link, zeta: f64, net: &Network) -> f64 {
    if link.is_backhaul() {
        zeta * net.params.m_s as f64 / net.params.k_s as f64
    } else {
        1.0 - zeta
    }
}

/// The six link spectral efficiencies without the bandwidth-split factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseRates {
    pub macro_dl: f64,
    pub macro_ul: f64,
    pub small_dl: f64,
    pub small_ul: f64,
    pub backhaul_dl: f64,
    pub backhaul_ul: f64,
}

impl BaseRates {
    pub fn get(&self, link: Link) -> f64 {
        match link {
            Link::MacroDl => self.macro_dl,
            Link::MacroUl => self.macro_ul,
            Link::SmallDl => self.small_dl,
            Link::SmallUl => self.small_ul,
            Link::BackhaulDl => self.backhaul_dl,
            Link::BackhaulUl => self.backhaul_ul,
        }
    }

    /// Applies the split `zeta` and aggregates the area rate.
    pub fn bundle(&self, net: &Network, zeta: f64) -> RateBundle {
        let f = |link| zeta_prefactor(link, zeta, net) * self.get(link);
        let mut b = RateBundle {
            r_m_dl: f(Link::MacroDl),
            r_m_ul: f(Link::MacroUl),
            r_s_dl: f(Link::SmallDl),
            r_s_ul: f(Link::SmallUl),
            r_b_dl: f(Link::BackhaulDl),
            r_b_ul: f(Link::BackhaulUl),
            area_rate: 0.0,
        };
        b.area_rate = sum_rate_area(net, &b);
        b
    }
}

/// Computes the six base rates, in parallel, with outer tolerance `cfg`.
pub fn base_rates(net: &Network, cfg: &QuadConfig) -> Result<BaseRates> {
    cfg.validate()?;
    let v: Vec<f64> = Link::ALL
        .par_iter()
        .map(|&link| link_rate_base(link, net, cfg).map_err(|e| e.within(link.name())))
        .collect::<Result<_>>()?;
    Ok(BaseRates {
        macro_dl: v[0],
        macro_ul: v[1],
        small_dl: v[2],
        small_ul: v[3],
        backhaul_dl: v[4],
        backhaul_ul: v[5],
    })
}

/// Link spectral efficiencies in bit/s/Hz, prefactors included, and the
/// area sum rate in bit/s per m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBundle {
    pub r_m_dl: f64,
    pub r_m_ul: f64,
    pub r_s_dl: f64,
    pub r_s_ul: f64,
    pub r_b_dl: f64,
    pub r_b_ul: f64,
    pub area_rate: f64,
}

impl RateBundle {
    pub fn get(&self, link: Link) -> f64 {
        match link {
            Link::MacroDl => self.r_m_dl,
            Link::MacroUl => self.r_m_ul,
            Link::SmallDl => self.r_s_dl,
            Link::SmallUl => self.r_s_ul,
            Link::BackhaulDl => self.r_b_dl,
            Link::BackhaulUl => self.r_b_ul,
        }
    }
}

/// All six rates and the area rate at the configured `zeta_b`.
pub fn rates(net: &Network) -> Result<RateBundle> {
    Ok(base_rates(net, &QuadConfig::default())?.bundle(net, net.params.zeta_b))
}

/// All six FDD rates at the configured `zeta_b`.
pub fn rates_fdd(net: &Network) -> Result<RateBundle> {
    if !net.params.duplex.is_fdd() {
        return Err(Error::InvalidParams("rates_fdd requires FDD duplexing".into()));
    }
    rates(net)
}

fn single(link: Link, net: &Network) -> Result<f64> {
    let base = link_rate_base(link, net, &QuadConfig::default())?;
    Ok(zeta_prefactor(link, net.params.zeta_b, net) * base)
}

pub fn rate_macro_dl(net: &Network) -> Result<f64> {
    single(Link::MacroDl, net)
}

pub fn rate_macro_ul(net: &Network) -> Result<f64> {
    single(Link::MacroUl, net)
}

pub fn rate_small_dl(net: &Network) -> Result<f64> {
    single(Link::SmallDl, net)
}

pub fn rate_small_ul(net: &Network) -> Result<f64> {
    single(Link::SmallUl, net)
}

pub fn rate_backhaul_dl(net: &Network) -> Result<f64> {
    single(Link::BackhaulDl, net)
}

pub fn rate_backhaul_ul(net: &Network) -> Result<f64> {
    single(Link::BackhaulUl, net)
}

/// Area sum rate in bit/s per m².
///
/// Small-cell traffic is limited by the weaker of the access and backhaul
/// links in each direction.
pub fn sum_rate_area(net: &Network, r: &RateBundle) -> f64 {
    let d = &net.derived;
    let p = &net.params;
    let act = d.activity;
    let users = p.k_m as f64 * p.lambda_m + p.k_s as f64 * p.lambda_s;
    let macro_part = act.m_dl * r.r_m_dl + act.m_ul * r.r_m_ul;
    let small_part = act.s_dl * r.r_s_dl.min(r.r_b_dl) + act.s_ul * r.r_s_ul.min(r.r_b_ul);
    let small = if d.assoc_s == 0.0 {
        0.0
    } else {
        d.assoc_s * small_part
    };
    p.bandwidth * users * (d.assoc_m * macro_part + small)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::femto_light;
    use crate::quadrature::{integrate_panels, try_integrate};
    use crate::special::incomplete_beta;

    fn femto() -> Network {
        let (p, w) = femto_light();
        Network::new(p, w).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let net = femto();
        for kind in LaplaceKind::ALL {
            let v = interference_laplace(kind, 0.0, Some(1e8), &net).unwrap();
            assert_eq!(v, 1.0, "{kind:?}");
            let v = interference_laplace(kind, 1e-30, Some(1e8), &net).unwrap();
            assert!(v > 1.0 - 1e-6 && v <= 1.0, "{kind:?} {v}");
        }
    }

    #[test]
    fn conditional_kinds_need_serving_loss() {
        let net = femto();
        for kind in LaplaceKind::ALL.into_iter().filter(|k| k.is_conditional()) {
            assert!(matches!(
                interference_laplace(kind, 1.0, None, &net),
                Err(Error::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn no_uplink_ues_no_ue_interference() {
        let net = femto()
            .with(|p, _| {
                p.duplex = Duplex::Tdd {
                    tau_m: 1.0,
                    tau_s: 1.0,
                    tau_b: 0.5,
                }
            })
            .unwrap();
        for z in [1e-3, 1.0, 1e6, 1e12] {
            assert_eq!(interference_laplace(LaplaceKind::UeDl, z, None, &net).unwrap(), 1.0);
            assert_eq!(interference_laplace(LaplaceKind::UeUlMacro, z, None, &net).unwrap(), 1.0);
        }
    }

    #[test]
    fn macro_ue_transform_assembles_from_c() {
        let net = femto();
        let d = &net.derived;
        let p = &net.params;
        let w = &net.powers;
        let delta = d.delta;
        let c_m = crate::special::c_alpha_k_direct(w.p_mt, 1.0, p.k_m, p.alpha).unwrap();
        let c_s = crate::special::c_alpha_k_direct(w.p_mt, 1.0, p.k_s, p.alpha).unwrap();
        let expect = (-(0.5 * d.a_m * c_m * (w.p_mt / p.k_m as f64).powf(delta)
            + 0.5 * d.a_s * c_s * (w.p_st / p.k_s as f64).powf(delta)))
            .exp();
        let got = interference_laplace(LaplaceKind::OcMacroUe, 1.0, Some(1.0), &net).unwrap();
        assert!(rel(got, expect) < 1e-10, "{got} {expect}");

        // the alternative reading evaluates the SAP term at the SAP power
        let lit = net
            .with(|p, _| p.conventions.macro_ue_sap_term_at_sap_power = true)
            .unwrap();
        let c_s = crate::special::c_alpha_k_direct(w.p_st, 1.0, p.k_s, p.alpha).unwrap();
        let expect = (-(0.5 * d.a_m * c_m * (w.p_mt / p.k_m as f64).powf(delta)
            + 0.5 * d.a_s * c_s * (w.p_st / p.k_s as f64).powf(delta)))
            .exp();
        let got = interference_laplace(LaplaceKind::OcMacroUe, 1.0, Some(1.0), &lit).unwrap();
        assert!(rel(got, expect) < 1e-10);
    }

    /// Exponent of a Γ(K)-faded tier in `y = x^δ` space, integrated directly.
    fn tier_by_quadrature(a: f64, p: f64, k: usize, z: f64, y0: f64, delta: f64) -> f64 {
        let kf = k as f64;
        let cfg = QuadConfig::new(1e-9, 1e-300, 2000).unwrap();
        let f = |y: f64| {
            let x = (y0 + y).powf(1.0 / delta);
            -(-kf * (z * p / (kf * x)).ln_1p()).exp_m1()
        };
        let scale = (z * p / kf).powf(delta);
        a * integrate_panels(f, scale, &cfg).unwrap().value
    }

    #[test]
    fn excluded_tier_matches_direct_integration() {
        let net = femto();
        let d = &net.derived;
        let w = &net.powers;
        let p = &net.params;
        let t: f64 = 3e8;
        let z = 2e7;
        // macro UE: MBS interferers beyond t, SAP interferers beyond t·P_st/P_mt
        let expect = tier_by_quadrature(0.5 * d.a_m, w.p_mt, p.k_m, z, t.powf(d.delta), d.delta)
            + tier_by_quadrature(
                0.5 * d.a_s,
                w.p_st,
                p.k_s,
                z,
                (t * w.p_st / w.p_mt).powf(d.delta),
                d.delta,
            );
        let cfg = QuadConfig::default().tighter();
        let got = laplace_exponent(LaplaceKind::OcMacroUe, z, Some(t), &net, &cfg).unwrap();
        assert!(rel(got, expect) < 1e-6, "{got} {expect}");
    }

    #[test]
    fn open_tier_matches_direct_integration() {
        let net = femto();
        let d = &net.derived;
        let w = &net.powers;
        let p = &net.params;
        let z = 5e6;
        let expect = tier_by_quadrature(0.5 * d.a_m, w.p_mt, p.k_m, z, 0.0, d.delta)
            + tier_by_quadrature(0.5 * d.a_s, w.p_st, p.k_s, z, 0.0, d.delta);
        let cfg = QuadConfig::default().tighter();
        let got = laplace_exponent(LaplaceKind::MbsUl, z, None, &net, &cfg).unwrap();
        assert!(rel(got, expect) < 1e-6, "{got} {expect}");
    }

    #[test]
    fn ue_uplink_thinning_limits() {
        let delta = 2.0 / 3.8;
        let cfg = QuadConfig::default().tighter();
        let full = gamma(1.0 + delta) * gamma(1.0 - delta);
        assert!(rel(ue_thinning_integral(1e12, delta, &cfg).unwrap(), full) < 1e-6);
        assert_eq!(ue_thinning_integral(0.0, delta, &cfg).unwrap(), 0.0);
        // against panel integration at a moderate κ
        let kappa = 0.37;
        let oracle = integrate_panels(
            |v| -(-kappa * v).exp_m1() / (1.0 + v.powf(1.0 / delta)),
            1.0,
            &cfg,
        )
        .unwrap()
        .value;
        assert!(rel(ue_thinning_integral(kappa, delta, &cfg).unwrap(), oracle) < 1e-7);
    }

    #[test]
    fn backhaul_sap_uplink_matches_direct_form() {
        let net = femto();
        let d = &net.derived;
        let p = &net.params;
        let w = &net.powers;
        let z = 3e6;
        let m = p.m_s as f64;
        let cfg = QuadConfig::default().tighter();
        let oracle_cfg = QuadConfig::new(1e-9, 1e-300, 2000).unwrap();
        // ∫ [1-(1+zP u^{-1/δ}/M)^{-M}](1-e^{-a_b u}) du in the original variable
        let f = |u: f64| {
            let fade = -(-m * (z * w.p_sb * u.powf(-1.0 / d.delta) / m).ln_1p()).exp_m1();
            fade * -(-d.a_b * u).exp_m1()
        };
        let oracle = 0.5
            * p.k_b as f64
            * d.a_b
            * integrate_panels(f, (z * w.p_sb / m).powf(d.delta), &oracle_cfg).unwrap().value;
        let got = laplace_exponent(LaplaceKind::BhSapUl, z, None, &net, &cfg).unwrap();
        assert!(rel(got, oracle) < 1e-6, "{got} {oracle}");
    }

    #[test]
    fn laplace_in_unit_interval_and_nonincreasing() {
        let net = femto();
        for kind in LaplaceKind::ALL {
            let mut prev = 1.0;
            for e in -2..=16 {
                let z = 10f64.powi(e);
                let v = interference_laplace(kind, z, Some(1e8), &net).unwrap();
                assert!((0.0..=1.0).contains(&v), "{kind:?} {z} {v}");
                assert!(v <= prev + 1e-12, "{kind:?} at {z}: {v} > {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn small_dl_kernel_with_single_dof() {
        // Δ_s = 1 gives 1 - 1/(1+x) = x/(1+x)
        for x in [1e-9, 0.3, 5.0, 1e9] {
            assert!(rel(one_minus_pow(x, 1.0), x / (1.0 + x)) < 1e-14);
        }
    }

    #[test]
    fn incomplete_beta_oracle_for_kernels() {
        // sanity link to the special function the transforms rely on
        assert!(rel(incomplete_beta(1.0, 2.0, 3.0).unwrap(), 1.0 / 12.0) < 1e-14);
    }

    /// Macro downlink rate as an independent double integral in `(ln z, y)`.
    fn macro_dl_oracle(net: &Network) -> f64 {
        let d = &net.derived;
        let cfg = QuadConfig::new(1e-7, 1e-30, 400).unwrap();
        let inner_cfg = cfg.tighter();
        let law = net.macro_law();
        let lo = (1e-9 / d.nu_m_d).ln();
        let hi = (60.0 / net.params.sigma2).ln();
        let r = try_integrate(
            |s| {
                let z = s.exp();
                let ue = interference_laplace(LaplaceKind::UeDl, z, None, net)?;
                let oc = integrate_panels(
                    |y| {
                        let t = law.from_exponential(y);
                        interference_laplace(LaplaceKind::OcMacroUe, z, Some(t), net).unwrap()
                            * (-y).exp()
                    },
                    1.0,
                    &inner_cfg,
                )?
                .value;
                Ok((-net.params.sigma2 * z).exp() * (1.0 - (-z * d.nu_m_d).exp()) * ue * oc)
            },
            lo,
            hi,
            &cfg,
            "oracle",
        )
        .unwrap();
        r.value / LN_2
    }

    #[test]
    fn macro_dl_matches_independent_double_integral() {
        let net = femto();
        let got = link_rate_base(Link::MacroDl, &net, &QuadConfig::default()).unwrap();
        let oracle = macro_dl_oracle(&net);
        assert!(rel(got, oracle) < 1e-5, "{got} {oracle}");
        assert!(got > 0.0 && got < 30.0);
    }

    #[test]
    fn split_limits() {
        let net = femto();
        let base = base_rates(&net, &QuadConfig::default()).unwrap();
        let all_access = base.bundle(&net, 1.0);
        assert_eq!(all_access.r_m_dl, 0.0);
        assert_eq!(all_access.r_s_ul, 0.0);
        let none = base.bundle(&net, 0.0);
        assert_eq!(none.r_b_dl, 0.0);
        assert_eq!(none.r_b_ul, 0.0);
        for link in Link::ALL {
            assert!(base.get(link) > 0.0 && base.get(link).is_finite(), "{link}");
        }
    }

    #[test]
    fn strong_noise_kills_rates() {
        let cfg = QuadConfig::default();
        let loud = base_rates(&femto().with(|p, _| p.sigma2 = 1e3).unwrap(), &cfg).unwrap();
        let louder = base_rates(&femto().with(|p, _| p.sigma2 = 1e6).unwrap(), &cfg).unwrap();
        for link in Link::ALL {
            assert!(loud.get(link) < 1e-4, "{link}: {}", loud.get(link));
            assert!(louder.get(link) < loud.get(link), "{link}");
        }
    }

    #[test]
    fn fdd_macro_dl_is_scaled_full_activity_tdd() {
        let tdd = femto()
            .with(|p, _| {
                p.duplex = Duplex::Tdd {
                    tau_m: 1.0,
                    tau_s: 1.0,
                    tau_b: 1.0,
                }
            })
            .unwrap();
        let fdd = femto()
            .with(|p, _| p.duplex = Duplex::Fdd { xi_d: 0.4, xi_b: 0.5 })
            .unwrap();
        let cfg = QuadConfig::default();
        let a = link_rate_base(Link::MacroDl, &tdd, &cfg).unwrap();
        let b = link_rate_base(Link::MacroDl, &fdd, &cfg).unwrap();
        assert!(rel(b, 0.4 * a) < 1e-12, "{b} {a}");
    }

    #[test]
    fn fdd_band_fraction_limits() {
        let net = femto()
            .with(|p, _| p.duplex = Duplex::Fdd { xi_d: 0.0, xi_b: 1.0 })
            .unwrap();
        let r = rates_fdd(&net).unwrap();
        assert_eq!(r.r_m_dl, 0.0);
        assert_eq!(r.r_s_dl, 0.0);
        assert_eq!(r.r_b_ul, 0.0);
        assert!(r.r_m_ul > 0.0 && r.r_b_dl > 0.0);
        assert!(rates_fdd(&femto()).is_err());
    }

    #[test]
    fn sum_rate_uses_backhaul_bottleneck() {
        let net = femto();
        let mut r = RateBundle {
            r_m_dl: 2.0,
            r_m_ul: 1.0,
            r_s_dl: 3.0,
            r_s_ul: 1.5,
            r_b_dl: 0.5,
            r_b_ul: 4.0,
            area_rate: 0.0,
        };
        let d = &net.derived;
        let p = &net.params;
        let expect = p.bandwidth
            * (25.0 * p.lambda_m + p.lambda_s)
            * (d.assoc_m * (0.5 * 2.0 + 0.5 * 1.0) + d.assoc_s * (0.5 * 0.5 + 0.5 * 1.5));
        assert!(rel(sum_rate_area(&net, &r), expect) < 1e-14);
        r = RateBundle {
            r_m_dl: 0.0,
            r_m_ul: 0.0,
            r_s_dl: 0.0,
            r_s_ul: 0.0,
            r_b_dl: 0.0,
            r_b_ul: 0.0,
            area_rate: 0.0,
        };
        assert_eq!(sum_rate_area(&net, &r), 0.0);
    }
}
