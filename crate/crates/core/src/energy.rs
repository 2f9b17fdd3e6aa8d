//! Power consumption per link and per area, energy efficiency, the
//! bandwidth-split optimizer and parameter sweeps.
//!
//! Coding energies are stored in W per bit/s, so a link term is
//! `P_coding · B · R` with `R` in bit/s/Hz.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Network, SystemParams};
use crate::quadrature::QuadConfig;
use crate::rates::{base_rates, BaseRates, RateBundle};

/// Average power drawn by one link of each kind and by a unit area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown {
    /// W per macro cell.
    pub p_macro_link: f64,
    /// W per small cell.
    pub p_small_link: f64,
    /// W per backhaul link, one per MBS.
    pub p_backhaul_link: f64,
    /// W per m².
    pub p_area: f64,
}

/// Per-link powers for the given rates. Backhaul hardware is only counted
/// when the network has SAPs.
pub fn link_powers(net: &Network, r: &RateBundle) -> PowerBreakdown {
    let p = &net.params;
    let w = &net.powers;
    let act = net.derived.activity;
    let b = p.bandwidth;
    let (km, ks, kb) = (p.k_m as f64, p.k_s as f64, p.k_b as f64);
    let (mm, ms) = (p.m_m as f64, p.m_s as f64);

    let p_m = act.m_dl * w.p_mt
        + act.m_ul * km * w.p_ut
        + w.p_mf
        + w.p_ma * mm
        + w.p_ua * km
        + act.m_dl * km * (w.p_me + w.p_ud) * b * r.r_m_dl
        + act.m_ul * km * (w.p_md + w.p_ue) * b * r.r_m_ul;
    let p_s = act.s_dl * w.p_st
        + act.s_ul * ks * w.p_ut
        + w.p_sf
        + w.p_sa * ms
        + w.p_ua * ks
        + act.s_dl * ks * (w.p_se + w.p_ud) * b * r.r_s_dl
        + act.s_ul * ks * (w.p_sd + w.p_ue) * b * r.r_s_ul;
    let p_b = if p.lambda_s > 0.0 {
        act.b_dl * w.p_mb
            + act.b_ul * kb * w.p_sb
            + w.p_ma * mm
            + kb * ms * w.p_sa
            + act.b_dl * kb * ks * (w.p_me + w.p_sd) * b * r.r_b_dl
            + act.b_ul * kb * ks * (w.p_md + w.p_se) * b * r.r_b_ul
    } else {
        0.0
    };
    PowerBreakdown {
        p_macro_link: p_m,
        p_small_link: p_s,
        p_backhaul_link: p_b,
        p_area: p.lambda_m * p_m + p.lambda_s * p_s + p.lambda_m * p_b,
    }
}

/// Power per area in W/m².
pub fn area_power(net: &Network, r: &RateBundle) -> f64 {
    link_powers(net, r).p_area
}

/// Energy efficiency at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EEResult {
    pub zeta_b: f64,
    /// bit/J.
    pub eta: f64,
    /// bit/s per m².
    pub area_rate: f64,
    /// W per m².
    pub area_power: f64,
    pub rates: RateBundle,
    pub power: PowerBreakdown,
}

/// Energy efficiency from precomputed base rates at split `zeta`.
pub fn efficiency_at(net: &Network, base: &BaseRates, zeta: f64) -> Result<EEResult> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidParams(format!("zeta_b must lie in [0, 1], got {zeta}")));
    }
    let rates = base.bundle(net, zeta);
    let power = link_powers(net, &rates);
    if !(power.p_area > 0.0) || !power.p_area.is_finite() {
        return Err(Error::DegenerateModel(format!(
            "area power is {} W/m², energy efficiency undefined",
            power.p_area
        )));
    }
    Ok(EEResult {
        zeta_b: zeta,
        eta: rates.area_rate / power.p_area,
        area_rate: rates.area_rate,
        area_power: power.p_area,
        rates,
        power,
    })
}

/// Energy efficiency at the configured `zeta_b`.
pub fn energy_efficiency(net: &Network) -> Result<EEResult> {
    let base = base_rates(net, &QuadConfig::default())?;
    efficiency_at(net, &base, net.params.zeta_b)
}

/// How the bandwidth is split between access and backhaul.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationScheme {
    /// The split maximizing η.
    Optimal,
    /// Backhaul share equal to its share of the load, `K_b K_s / (K_m + K_b K_s)`.
    Proportional,
    Fixed(f64),
    /// No small cells and no backhaul.
    OneTier,
}

impl AllocationScheme {
    pub fn name(&self) -> String {
        match self {
            AllocationScheme::Optimal => "optimal".into(),
            AllocationScheme::Proportional => "proportional".into(),
            AllocationScheme::Fixed(z) => format!("fixed:{z}"),
            AllocationScheme::OneTier => "one-tier".into(),
        }
    }
}

/// The split a scheme prescribes; `None` for [`AllocationScheme::Optimal`],
/// which has to be searched for.
pub fn scheme_zeta(scheme: AllocationScheme, params: &SystemParams) -> Option<f64> {
    match scheme {
        AllocationScheme::Optimal => None,
        AllocationScheme::Proportional => {
            let bh = (params.k_b * params.k_s) as f64;
            Some(bh / (params.k_m as f64 + bh))
        }
        AllocationScheme::Fixed(z) => Some(z),
        AllocationScheme::OneTier => Some(0.0),
    }
}

/// Settings of the bandwidth-split search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    pub grid_points: usize,
    pub refine_tol: f64,
    pub quad: QuadConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            grid_points: 33,
            refine_tol: 1e-3,
            quad: QuadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaOptimum {
    pub zeta: f64,
    pub result: EEResult,
    /// `(ζ_b, η)` on the coarse grid.
    pub grid: Vec<(f64, f64)>,
    /// Whether η varies by less than 1e-6 relative over the grid.
    pub flat: bool,
}

/// Coarse grid scan on `[0, 1]` followed by golden-section refinement
/// around the best grid point, using precomputed base rates.
pub fn optimize_zeta_with(net: &Network, base: &BaseRates, cfg: &OptimizeConfig) -> Result<ZetaOptimum> {
    if cfg.grid_points < 3 {
        return Err(Error::InvalidParams(format!(
            "zeta grid needs at least 3 points, got {}",
            cfg.grid_points
        )));
    }
    if !(cfg.refine_tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "refine tolerance must be positive, got {}",
            cfg.refine_tol
        )));
    }
    let n = cfg.grid_points;
    let eta = |z: f64| efficiency_at(net, base, z).map(|r| r.eta);
    let grid: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let z = i as f64 / (n - 1) as f64;
            eta(z).map(|e| (z, e))
        })
        .collect::<Result<_>>()?;
    let (best_i, &(_, best_eta)) = grid
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, f64))>, (i, g)| match acc {
            Some((_, b)) if b.1 >= g.1 => acc,
            _ => Some((i, g)),
        })
        .expect("grid is nonempty");
    let min_eta = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let flat = best_eta - min_eta < 1e-6 * best_eta.abs();
    if flat {
        log::warn!("energy efficiency is flat in zeta_b (spread {:e})", best_eta - min_eta);
    }

    let mut lo = grid[best_i.saturating_sub(1)].0;
    let mut hi = grid[(best_i + 1).min(n - 1)].0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eta(x1)?;
    let mut f2 = eta(x2)?;
    while hi - lo > cfg.refine_tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eta(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eta(x2)?;
        }
    }
    let (mut zeta, mut val) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for &(z, e) in &grid {
        if e > val {
            zeta = z;
            val = e;
        }
    }
    Ok(ZetaOptimum {
        zeta,
        result: efficiency_at(net, base, zeta)?,
        grid,
        flat,
    })
}

/// Computes base rates and searches the η-maximizing split.
pub fn optimize_zeta(net: &Network, cfg: &OptimizeConfig) -> Result<ZetaOptimum> {
    let base = base_rates(net, &cfg.quad)?;
    optimize_zeta_with(net, &base, cfg)
}

/// Energy efficiency of a network under an allocation scheme.
pub fn evaluate_scheme(net: &Network, scheme: AllocationScheme, cfg: &OptimizeConfig) -> Result<EEResult> {
    let net = match scheme {
        AllocationScheme::OneTier => net.with(|p, _| {
            p.lambda_s = 0.0;
            p.zeta_b = 0.0;
        })?,
        _ => net.clone(),
    };
    let base = base_rates(&net, &cfg.quad)?;
    match scheme_zeta(scheme, &net.params) {
        Some(z) => efficiency_at(&net, &base, z),
        None => Ok(optimize_zeta_with(&net, &base, cfg)?.result),
    }
}

/// Parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Bandwidth split; the scheme is ignored.
    ZetaB,
    /// MBS transmit power in W, with the backhaul power tied to it.
    PmtCoupled,
    /// SAPs served per MBS; sets `K_b` and `λ_s = K_b λ_m`.
    SapsPerMbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub result: Result<EEResult>,
}

/// Evaluates every grid point independently and returns rows in grid order.
/// Failures are kept per row.
pub fn sweep(
    net: &Network,
    variable: SweepVariable,
    grid: &[f64],
    scheme: AllocationScheme,
    cfg: &OptimizeConfig,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("sweep grid is empty".into()));
    }
    if variable == SweepVariable::ZetaB {
        let base = base_rates(net, &cfg.quad)?;
        return Ok(grid
            .iter()
            .map(|&x| SweepRow {
                x,
                result: efficiency_at(net, &base, x),
            })
            .collect());
    }
    Ok(grid
        .par_iter()
        .map(|&x| {
            let point = match variable {
                SweepVariable::PmtCoupled => net.with(|_, w| {
                    w.p_mt = x;
                    w.p_mb = x;
                }),
                SweepVariable::SapsPerMbs => {
                    if x < 1.0 || x.fract() != 0.0 {
                        Err(Error::InvalidParams(format!(
                            "SAPs per MBS must be a positive integer, got {x}"
                        )))
                    } else {
                        net.with(|p, _| {
                            p.k_b = x as usize;
                            p.lambda_s = x * p.lambda_m;
                        })
                    }
                }
                SweepVariable::ZetaB => unreachable!(),
            };
            SweepRow {
                x,
                result: point.and_then(|n| evaluate_scheme(&n, scheme, cfg)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::femto_light;
    use crate::model::Duplex;

    fn femto() -> Network {
        let (p, w) = femto_light();
        Network::new(p, w).unwrap()
    }

    fn zero_rates() -> RateBundle {
        RateBundle {
            r_m_dl: 0.0,
            r_m_ul: 0.0,
            r_s_dl: 0.0,
            r_s_ul: 0.0,
            r_b_dl: 0.0,
            r_b_ul: 0.0,
            area_rate: 0.0,
        }
    }

    #[test]
    fn macro_power_collapses_without_coding_and_uplink() {
        let net = femto()
            .with(|p, w| {
                p.duplex = Duplex::Tdd {
                    tau_m: 1.0,
                    tau_s: 0.5,
                    tau_b: 0.5,
                };
                w.p_me = 0.0;
                w.p_md = 0.0;
                w.p_ud = 0.0;
                w.p_ue = 0.0;
            })
            .unwrap();
        let mut r = zero_rates();
        r.r_m_dl = 3.0;
        let pb = link_powers(&net, &r);
        let w = &net.powers;
        assert_eq!(pb.p_macro_link, w.p_mt + w.p_mf + w.p_ma * 100.0 + w.p_ua * 25.0);
    }

    #[test]
    fn backhaul_power_without_downlink() {
        let net = femto()
            .with(|p, _| {
                p.duplex = Duplex::Tdd {
                    tau_m: 0.5,
                    tau_s: 0.5,
                    tau_b: 0.0,
                }
            })
            .unwrap();
        let pb = link_powers(&net, &zero_rates());
        let w = &net.powers;
        assert!((pb.p_backhaul_link - (6.0 * w.p_sb + w.p_ma * 100.0 + 6.0 * 4.0 * w.p_sa)).abs() < 1e-12);
    }

    #[test]
    fn area_power_terms() {
        let net = femto();
        let r = RateBundle {
            r_m_dl: 1.2,
            r_m_ul: 0.7,
            r_s_dl: 2.5,
            r_s_ul: 1.1,
            r_b_dl: 4.0,
            r_b_ul: 3.0,
            area_rate: 0.0,
        };
        let pb = link_powers(&net, &r);
        // term-by-term with the femto constants
        let b = 1e7;
        let p_m = 0.5 * 60.255_958_607_435_78
            + 0.5 * 25.0 * 0.050_118_723_362_727_23
            + 225.0
            + 100.0
            + 2.5
            + 0.5 * 25.0 * 2.5e-9 * b * 1.2
            + 0.5 * 25.0 * 1.1e-9 * b * 0.7;
        assert!((pb.p_macro_link - p_m).abs() < 1e-9 * p_m, "{} {p_m}", pb.p_macro_link);
        let p_s = 0.5 * 0.234_422_881_531_992
            + 0.5 * 0.050_118_723_362_727_23
            + 5.2
            + 3.2
            + 0.1
            + 0.5 * 2.6e-9 * b * 2.5
            + 0.5 * 1.9e-9 * b * 1.1;
        assert!((pb.p_small_link - p_s).abs() < 1e-9 * p_s);
        let p_b = 0.5 * 60.255_958_607_435_78
            + 0.5 * 6.0 * 0.234_422_881_531_992
            + 100.0
            + 24.0 * 0.8
            + 0.5 * 6.0 * 1.7e-9 * b * 4.0
            + 0.5 * 6.0 * 1.0e-9 * b * 3.0;
        assert!((pb.p_backhaul_link - p_b).abs() < 1e-9 * p_b);
        let area = 5e-6 * p_m + 25e-6 * p_s + 5e-6 * p_b;
        assert!((pb.p_area - area).abs() < 1e-9 * area);
    }

    #[test]
    fn area_power_is_linear_in_densities() {
        let net = femto();
        let r = zero_rates();
        let dense = net
            .with(|p, _| {
                p.lambda_m *= 2.0;
                p.lambda_s *= 2.0;
            })
            .unwrap();
        let a = area_power(&net, &r);
        let b = area_power(&dense, &r);
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn degenerate_power_is_reported() {
        let net = femto()
            .with(|p, w| {
                p.lambda_s = 0.0;
                p.duplex = Duplex::Tdd {
                    tau_m: 0.0,
                    tau_s: 0.0,
                    tau_b: 0.0,
                };
                *w = crate::model::PowerParams {
                    p_mt: 1.0,
                    p_st: 1.0,
                    p_ut: 0.0,
                    p_mb: 0.0,
                    p_sb: 0.0,
                    p_ma: 0.0,
                    p_sa: 0.0,
                    p_ua: 0.0,
                    p_mf: 0.0,
                    p_sf: 0.0,
                    p_me: 0.0,
                    p_md: 0.0,
                    p_se: 0.0,
                    p_sd: 0.0,
                    p_ue: 0.0,
                    p_ud: 0.0,
                };
            })
            .unwrap();
        let base = BaseRates {
            macro_dl: 0.0,
            macro_ul: 0.0,
            small_dl: 0.0,
            small_ul: 0.0,
            backhaul_dl: 0.0,
            backhaul_ul: 0.0,
        };
        assert!(matches!(efficiency_at(&net, &base, 0.5), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn scheme_splits() {
        let (mut p, _) = femto_light();
        p.k_b = 5;
        let z = scheme_zeta(AllocationScheme::Proportional, &p).unwrap();
        assert!((z - 5.0 / 30.0).abs() < 1e-15);
        assert_eq!(scheme_zeta(AllocationScheme::Fixed(0.5), &p), Some(0.5));
        assert_eq!(scheme_zeta(AllocationScheme::OneTier, &p), Some(0.0));
        assert_eq!(scheme_zeta(AllocationScheme::Optimal, &p), None);
    }

    #[test]
    fn efficiency_identity_and_optimum() {
        let net = femto();
        let cfg = OptimizeConfig::default();
        let opt = optimize_zeta(&net, &cfg).unwrap();
        let r = opt.result;
        assert!((r.eta * r.area_power - r.area_rate).abs() <= 1e-12 * r.area_rate);
        for &(_, e) in &opt.grid {
            assert!(r.eta >= e);
        }
        assert!(opt.zeta > 0.0 && opt.zeta < 1.0, "{}", opt.zeta);
        assert_eq!(opt.grid.len(), 33);
    }

    #[test]
    fn single_tier_keeps_all_bandwidth_on_access() {
        let net = femto().with(|p, _| p.lambda_s = 0.0).unwrap();
        let opt = optimize_zeta(&net, &OptimizeConfig::default()).unwrap();
        assert_eq!(opt.zeta, 0.0);
    }

    #[test]
    fn sweep_keeps_grid_order_and_row_errors() {
        let net = femto();
        let cfg = OptimizeConfig::default();
        let rows = sweep(&net, SweepVariable::ZetaB, &[0.0, 0.5, 1.0, 2.0], AllocationScheme::Optimal, &cfg)
            .unwrap();
        assert_eq!(rows.iter().map(|r| r.x).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0, 2.0]);
        assert!(rows[3].result.is_err());
        let at_one = rows[2].result.as_ref().unwrap();
        assert_eq!(at_one.rates.r_m_dl, 0.0);
        assert_eq!(at_one.rates.r_s_dl, 0.0);
        let rows = sweep(&net, SweepVariable::SapsPerMbs, &[2.0, 30.0], AllocationScheme::Fixed(0.5), &cfg)
            .unwrap();
        assert!(rows[0].result.is_ok());
        assert!(matches!(rows[1].result, Err(Error::InvalidParams(_))));
        assert!(sweep(&net, SweepVariable::ZetaB, &[], AllocationScheme::Optimal, &cfg).is_err());
    }

    #[test]
    fn one_tier_ignores_sap_count() {
        let net = femto();
        let cfg = OptimizeConfig::default();
        let rows = sweep(&net, SweepVariable::SapsPerMbs, &[1.0, 4.0], AllocationScheme::OneTier, &cfg)
            .unwrap();
        let a = rows[0].result.as_ref().unwrap();
        let b = rows[1].result.as_ref().unwrap();
        assert_eq!(a.eta, b.eta);
    }
}
