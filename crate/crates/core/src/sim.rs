//! Monte Carlo simulator: PPP topologies in a disk around a typical
//! receiver at the origin, effective-fading or full-channel SINR draws, ZF
//! and block-diagonalization precoders, and empirical interference Laplace
//! transforms.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, purpose, replicate)`, and replicate results are reduced in index
//! order, so estimates are bit-identical across runs and thread counts.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Duplex, FddBackhaulServing, Network, PowerParams, SystemParams};
use crate::quadrature::{try_integrate_semi_infinite_scaled, QuadConfig};
use crate::rates::{laplace_exponent, zeta_prefactor, LaplaceKind, Link};
use crate::special::{LognormalShadow, PathLossLaw};

/// How the serving link is simulated. Interferers always use Γ(K)
/// effective fading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelMode {
    /// Serving gains drawn from their effective laws, matching the analysis.
    #[default]
    GammaEffective,
    /// Actual i.i.d. Rayleigh channels with ZF precoding or ZF receive filters.
    FullChannel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Simulation disk radius in m; chosen from the densities when `None`.
    pub radius_m: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    /// Fading and duplex draws averaged per topology.
    pub draws_per_replicate: usize,
    /// Topology resamples allowed while waiting for the required association.
    pub max_resamples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            radius_m: None,
            replicates: 2000,
            seed: 1,
            channel_mode: ChannelMode::GammaEffective,
            draws_per_replicate: 8,
            max_resamples: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.draws_per_replicate == 0 || self.max_resamples == 0 {
            return Err(Error::InvalidParams(
                "replicates, draws_per_replicate and max_resamples must be >= 1".into(),
            ));
        }
        if let Some(r) = self.radius_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParams(format!("radius_m must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn radius(&self, params: &SystemParams) -> f64 {
        self.radius_m.unwrap_or_else(|| auto_radius(params))
    }
}

/// Disk radius beyond which the mean interference of the sparsest tier is
/// below 0.5% of its contribution from outside the typical cell radius.
///
/// With `r_e = 1/(2√λ)`, the tail beyond `R` scales as `(r_e/R)^(α-2)`, so
/// `R = r_e · 201^(1/(α-2))`.
pub fn auto_radius(params: &SystemParams) -> f64 {
    let sparsest = if params.lambda_s > 0.0 {
        params.lambda_m.min(params.lambda_s)
    } else {
        params.lambda_m
    };
    let r_e = 0.5 / sparsest.sqrt();
    r_e * 201f64.powf(1.0 / (params.alpha - 2.0))
}

fn rng_for(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

const TOPOLOGY_PURPOSE: u64 = 0x70;
const LAPLACE_PURPOSE: u64 = 0x1A;

fn link_purpose(link: Link) -> u64 {
    1 + Link::ALL.iter().position(|&l| l == link).unwrap() as u64
}

/// A point of a PPP with its shadowing toward the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Access-link shadowing `S_D` toward the origin.
    pub s_d: f64,
    /// Backhaul-link shadowing `S_B` toward the origin.
    pub s_b: f64,
}

impl Point {
    pub fn dist(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub radius: f64,
    pub mbs: Vec<Point>,
    pub saps: Vec<Point>,
    pub ues: Vec<Point>,
}

fn shadow_draw<R: Rng>(rng: &mut R, shadow: LognormalShadow) -> f64 {
    if shadow.sigma_db() == 0.0 {
        return 1.0;
    }
    let x: f64 = rng.sample(StandardNormal);
    10f64.powf(shadow.sigma_db() * x / 10.0)
}

fn ppp_disk<R: Rng>(
    rng: &mut R,
    density: f64,
    radius: f64,
    shadow_d: LognormalShadow,
    shadow_b: LognormalShadow,
) -> Vec<Point> {
    let mean = density * std::f64::consts::PI * radius * radius;
    if !(mean > 0.0) {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive finite mean").sample(rng) as usize;
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let th = std::f64::consts::TAU * rng.random::<f64>();
            Point {
                x: r * th.cos(),
                y: r * th.sin(),
                s_d: shadow_draw(rng, shadow_d),
                s_b: shadow_draw(rng, shadow_b),
            }
        })
        .collect()
}

/// Independent PPPs of MBSs, SAPs and UEs in the simulation disk. The
/// result depends only on `(cfg.seed, replicate)`.
pub fn sample_topology(params: &SystemParams, cfg: &SimConfig, replicate: u64) -> Topology {
    let radius = cfg.radius(params);
    let mut rng = rng_for(cfg.seed, TOPOLOGY_PURPOSE, replicate);
    let (sd, sb) = (params.shadow_d, params.shadow_b);
    Topology {
        radius,
        mbs: ppp_disk(&mut rng, params.lambda_m, radius, sd, sb),
        saps: ppp_disk(&mut rng, params.lambda_s, radius, sd, sb),
        ues: ppp_disk(&mut rng, params.lambda_u, radius, sd, sb),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Serving {
    Mbs(usize),
    Sap(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub ue: Vec<Serving>,
    /// MBS serving each SAP over the backhaul.
    pub sap_to_mbs: Vec<usize>,
}

fn path_loss(dist: f64, shadow: f64, alpha: f64) -> f64 {
    dist.powf(alpha) / shadow
}

/// Station with the largest average received power `P·S·r^{-α}` at the
/// origin, using the stored shadowing. Ties go to the lower index, MBSs first.
pub fn associate_typical(topo: &Topology, powers: &PowerParams, alpha: f64) -> Result<(Serving, f64)> {
    let mut best: Option<(Serving, f64, f64)> = None;
    let tiers = [(&topo.mbs, powers.p_mt, true), (&topo.saps, powers.p_st, false)];
    for (points, p, is_mbs) in tiers {
        for (i, pt) in points.iter().enumerate() {
            let loss = path_loss(pt.dist(), pt.s_d, alpha);
            let rx = p / loss;
            if best.is_none_or(|b| rx > b.2) {
                let s = if is_mbs { Serving::Mbs(i) } else { Serving::Sap(i) };
                best = Some((s, loss, rx));
            }
        }
    }
    best.map(|(s, loss, _)| (s, loss))
        .ok_or(Error::EmptyTier("base stations"))
}

/// Associates every UE with the station of largest average received power
/// and every SAP with the MBS of smallest backhaul path loss. Shadowing is
/// drawn independently for each UE-station and SAP-MBS pair.
pub fn associate<R: Rng>(
    topo: &Topology,
    params: &SystemParams,
    powers: &PowerParams,
    rng: &mut R,
) -> Result<Association> {
    if topo.mbs.is_empty() {
        return Err(Error::EmptyTier("mbs"));
    }
    let alpha = params.alpha;
    let dist = |a: &Point, b: &Point| (a.x - b.x).hypot(a.y - b.y);
    let mut ue = Vec::with_capacity(topo.ues.len());
    for u in &topo.ues {
        let mut best = (Serving::Mbs(0), f64::NEG_INFINITY);
        for (i, m) in topo.mbs.iter().enumerate() {
            let rx = powers.p_mt * shadow_draw(rng, params.shadow_d) / dist(u, m).powf(alpha);
            if rx > best.1 {
                best = (Serving::Mbs(i), rx);
            }
        }
        for (i, s) in topo.saps.iter().enumerate() {
            let rx = powers.p_st * shadow_draw(rng, params.shadow_d) / dist(u, s).powf(alpha);
            if rx > best.1 {
                best = (Serving::Sap(i), rx);
            }
        }
        ue.push(best.0);
    }
    let mut sap_to_mbs = Vec::with_capacity(topo.saps.len());
    for s in &topo.saps {
        let mut best = (0, f64::INFINITY);
        for (i, m) in topo.mbs.iter().enumerate() {
            let loss = path_loss(dist(s, m), shadow_draw(rng, params.shadow_b), alpha);
            if loss < best.1 {
                best = (i, loss);
            }
        }
        sap_to_mbs.push(best.0);
    }
    Ok(Association { ue, sap_to_mbs })
}

fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

fn hermitian_inverse(a: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let scale = a.norm();
    let inv = Cholesky::new(a)
        .map(|c| c.inverse())
        .ok_or(Error::RankDeficient { rows: n, cols: n })?;
    let cond = scale * inv.norm();
    if !(cond.is_finite() && cond < 1e12) {
        return Err(Error::RankDeficient { rows: n, cols: n });
    }
    Ok(inv)
}

/// ZF precoder `W = ξ Ĥ*(ĤĤ*)^{-1}` with `ξ² = 1/tr[(ĤĤ*)^{-1}]`, so that
/// `ĤW = ξ I` and `‖W‖_F² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    pub w: DMatrix<Complex64>,
    pub xi: f64,
}

/// ZF precoder for a `K × M` channel.
pub fn zf_precoder(h: &DMatrix<Complex64>) -> Result<ZfPrecoder> {
    let (k, m) = h.shape();
    if k > m {
        return Err(Error::RankDeficient { rows: k, cols: m });
    }
    let hh = h.adjoint();
    let gram_inv = hermitian_inverse(h * &hh).map_err(|_| Error::RankDeficient { rows: k, cols: m })?;
    let tr: f64 = (0..k).map(|i| gram_inv[(i, i)].re).sum();
    let xi = (1.0 / tr).sqrt();
    let w = (hh * gram_inv) * Complex64::new(xi, 0.0);
    Ok(ZfPrecoder { w, xi })
}

/// One SAP's block-diagonalization precoder: unit-norm eigenmode columns in
/// the null space of every other SAP's channel, with their channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct BdBlock {
    pub w: DMatrix<Complex64>,
    pub gains: Vec<f64>,
}

/// Block-diagonalization precoders for `K_b` SAPs with `m_s` antennas each,
/// stacked as the rows of `h` (`K_b m_s × M`).
pub fn bd_precoder(h: &DMatrix<Complex64>, m_s: usize) -> Result<Vec<BdBlock>> {
    let (rows, m) = h.shape();
    if m_s == 0 || rows % m_s != 0 || rows > m {
        return Err(Error::RankDeficient { rows, cols: m });
    }
    let k_b = rows / m_s;
    let mut blocks = Vec::with_capacity(k_b);
    for k in 0..k_b {
        let hk = h.rows(k * m_s, m_s).into_owned();
        let projector = if k_b == 1 {
            DMatrix::<Complex64>::identity(m, m)
        } else {
            let others = DMatrix::from_fn(rows - m_s, m, |i, j| {
                let src = if i < k * m_s { i } else { i + m_s };
                h[(src, j)]
            });
            let oh = others.adjoint();
            let inv = hermitian_inverse(&others * &oh).map_err(|_| Error::RankDeficient { rows, cols: m })?;
            DMatrix::<Complex64>::identity(m, m) - oh * inv * others
        };
        let eff_t = &projector * hk.adjoint();
        let gram = &hk * &eff_t;
        let eig = SymmetricEigen::new(gram);
        let mut w = DMatrix::<Complex64>::zeros(m, m_s);
        let mut gains = Vec::with_capacity(m_s);
        for i in 0..m_s {
            let lam = eig.eigenvalues[i].max(0.0);
            gains.push(lam);
            if lam > 0.0 {
                let col = &eff_t * eig.eigenvectors.column(i) / Complex64::new(lam.sqrt(), 0.0);
                w.set_column(i, &col);
            }
        }
        blocks.push(BdBlock { w, gains });
    }
    Ok(blocks)
}

/// Water-filling of `budget` over parallel channels with SNR gains
/// `gains` (per unit power). Returns the per-channel powers.
pub fn water_fill(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    idx.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut out = vec![0.0; gains.len()];
    let mut n = idx.len();
    while n > 0 {
        let inv_sum: f64 = idx[..n].iter().map(|&i| 1.0 / gains[i]).sum();
        let level = (budget + inv_sum) / n as f64;
        if level > 1.0 / gains[idx[n - 1]] {
            for &i in &idx[..n] {
                out[i] = level - 1.0 / gains[i];
            }
            return out;
        }
        n -= 1;
    }
    out
}

/// Per-SAP backhaul rates (bit/s/Hz) of ZF and BD on the same draw of a
/// unit-path-loss `K_b m_s × M` channel at transmit SNR `snr`.
///
/// Each BD block gets the power ZF spends on that SAP's streams, so the two
/// schemes are compared at equal per-SAP power.
pub fn zf_bd_backhaul_rates<R: Rng>(
    m: usize,
    k_b: usize,
    m_s: usize,
    snr: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = complex_gaussian(rng, k_b * m_s, m);
    let zf = zf_precoder(&h)?;
    let xi2 = zf.xi * zf.xi;
    let zf_rate = m_s as f64 * (1.0 + snr * xi2).log2();
    let blocks = bd_precoder(&h, m_s)?;
    let mut zf_rates = Vec::with_capacity(k_b);
    let mut bd_rates = Vec::with_capacity(k_b);
    for (k, block) in blocks.iter().enumerate() {
        let budget: f64 = (0..m_s)
            .map(|i| zf.w.column(k * m_s + i).norm_squared())
            .sum();
        let gains: Vec<f64> = block.gains.iter().map(|g| g * snr).collect();
        let p = water_fill(&gains, budget);
        let bd: f64 = gains.iter().zip(&p).map(|(g, p)| (1.0 + g * p).log2()).sum();
        zf_rates.push(zf_rate);
        bd_rates.push(bd);
    }
    Ok((zf_rates, bd_rates))
}

#[derive(Debug, Clone, Copy)]
struct Interferer {
    loss: f64,
    amp: f64,
    shape: usize,
    activity: f64,
}

#[derive(Debug, Clone)]
enum Signal {
    /// Deterministic SINR numerator.
    Fixed(f64),
    /// `scale · g` with `g ~ Γ(shape, 1)`.
    Gamma { scale: f64, shape: usize },
    /// ZF precoding from `m` antennas to streams with path losses `losses`;
    /// the typical stream is the first.
    ZfDownlink { m: usize, power: f64, losses: Vec<f64> },
    /// ZF receive filter at `m` antennas for `k` streams of power `power`.
    ZfUplink { m: usize, k: usize, power: f64, loss: f64 },
    /// Unit-norm ZF direction among `k` streams at `m` antennas, gain scaled by `scale`.
    ZfGain { m: usize, k: usize, scale: f64 },
}

struct Scenario {
    signal: Signal,
    interferers: Vec<Interferer>,
}

/// One SINR draw and the large-system deterministic equivalent of the same
/// draw (equal to `sinr` in effective-fading mode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub sinr: f64,
    pub equivalent: f64,
}

struct Fading {
    shapes: Vec<(usize, Gamma<f64>)>,
}

impl Fading {
    fn new() -> Self {
        Self { shapes: Vec::new() }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R, shape: usize) -> f64 {
        if shape == 1 {
            return rng.sample(Exp1);
        }
        if let Some((_, g)) = self.shapes.iter().find(|(s, _)| *s == shape) {
            return g.sample(rng);
        }
        let g = Gamma::new(shape as f64, 1.0).expect("positive shape");
        let v = g.sample(rng);
        self.shapes.push((shape, g));
        v
    }
}

fn bs_interferers(
    points: &[Point],
    skip: Option<usize>,
    backhaul: bool,
    alpha: f64,
    amp: f64,
    shape: usize,
    activity: f64,
    out: &mut Vec<Interferer>,
) {
    if activity == 0.0 || amp == 0.0 {
        return;
    }
    for (i, p) in points.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let s = if backhaul { p.s_b } else { p.s_d };
        out.push(Interferer {
            loss: path_loss(p.dist(), s, alpha),
            amp,
            shape,
            activity,
        });
    }
}

/// UE interferers of density `density`, kept with probability
/// `1 - exp(-g L^δ)` when `thin` is `Some(g)`.
#[allow(clippy::too_many_arguments)]
fn thinned_interferers<R: Rng>(
    rng: &mut R,
    density: f64,
    radius: f64,
    shadow: LognormalShadow,
    alpha: f64,
    thin: Option<f64>,
    amp: f64,
    shape: usize,
    activity: f64,
    out: &mut Vec<Interferer>,
) {
    if density == 0.0 || amp == 0.0 || activity == 0.0 {
        return;
    }
    let delta = 2.0 / alpha;
    for p in ppp_disk(rng, density, radius, shadow, LognormalShadow::none()) {
        let loss = path_loss(p.dist(), p.s_d, alpha);
        if let Some(g) = thin {
            let keep = -(-g * loss.powf(delta)).exp_m1();
            if rng.random::<f64>() >= keep {
                continue;
            }
        }
        out.push(Interferer {
            loss,
            amp,
            shape,
            activity,
        });
    }
}

fn draw_law<R: Rng>(rng: &mut R, law: PathLossLaw) -> f64 {
    loop {
        let y: f64 = rng.sample(Exp1);
        let t = law.from_exponential(y);
        if t > 0.0 && t.is_finite() {
            return t;
        }
    }
}

fn fdd_serving_law(net: &Network, link: Link) -> PathLossLaw {
    match link {
        Link::MacroUl | Link::SmallUl => net.uplink_law(),
        Link::BackhaulUl => match net.params.conventions.fdd_bh_serving {
            FddBackhaulServing::UplinkNearest => net.uplink_law(),
            FddBackhaulServing::Backhaul => net.backhaul_law(),
        },
        _ => unreachable!("downlink laws come from association"),
    }
}

/// Builds the serving link and interferer field of one topology draw.
/// Returns the scenario and the number of rejected topologies.
fn build_scenario<R: Rng>(
    link: Link,
    net: &Network,
    cfg: &SimConfig,
    radius: f64,
    rng: &mut R,
) -> Result<(Scenario, usize)> {
    let p = &net.params;
    let w = &net.powers;
    let d = &net.derived;
    let act = d.activity;
    let alpha = p.alpha;
    let fdd = p.duplex.is_fdd();
    let full = cfg.channel_mode == ChannelMode::FullChannel;
    let (sd, sb) = (p.shadow_d, p.shadow_b);
    let none = LognormalShadow::none();
    let (km, ks) = (p.k_m, p.k_s);
    let kbs = p.k_b * p.m_s;
    let mut interferers = Vec::new();

    let signal = match link {
        Link::MacroDl | Link::SmallDl => {
            let want_mbs = link == Link::MacroDl;
            let mut rejected = 0;
            let (mbs, saps, serving, t) = loop {
                if rejected >= cfg.max_resamples {
                    return Err(Error::EmptyTier(if want_mbs { "mbs" } else { "sap" }));
                }
                let mbs = ppp_disk(rng, p.lambda_m, radius, sd, none);
                let saps = ppp_disk(rng, p.lambda_s, radius, sd, none);
                let topo = Topology {
                    radius,
                    mbs,
                    saps,
                    ues: Vec::new(),
                };
                match associate_typical(&topo, w, alpha) {
                    Ok((s @ Serving::Mbs(_), t)) if want_mbs => break (topo.mbs, topo.saps, s, t),
                    Ok((s @ Serving::Sap(_), t)) if !want_mbs => break (topo.mbs, topo.saps, s, t),
                    _ => rejected += 1,
                }
            };
            let (skip_m, skip_s) = match serving {
                Serving::Mbs(i) => (Some(i), None),
                Serving::Sap(i) => (None, Some(i)),
            };
            bs_interferers(&mbs, skip_m, false, alpha, w.p_mt / km as f64, km, act.m_dl, &mut interferers);
            bs_interferers(&saps, skip_s, false, alpha, w.p_st / ks as f64, ks, act.s_dl, &mut interferers);
            if !fdd {
                thinned_interferers(rng, d.lambda_u_tilde, radius, sd, alpha, None, w.p_ut, 1, 1.0, &mut interferers);
            }
            let signal = if want_mbs {
                if full {
                    let law = net.macro_law();
                    let mut losses = vec![t];
                    losses.extend((1..km).map(|_| draw_law(rng, law)));
                    Signal::ZfDownlink {
                        m: p.m_m,
                        power: w.p_mt,
                        losses,
                    }
                } else {
                    Signal::Fixed(d.nu_m_d)
                }
            } else if full {
                Signal::ZfGain {
                    m: p.m_s,
                    k: ks,
                    scale: w.p_st / (ks as f64 * t),
                }
            } else {
                Signal::Gamma {
                    scale: w.p_st / (ks as f64 * t),
                    shape: d.delta_s,
                }
            };
            return Ok((Scenario { signal, interferers }, rejected));
        }
        Link::MacroUl | Link::SmallUl => {
            let macro_rx = link == Link::MacroUl;
            let law = if fdd {
                fdd_serving_law(net, link)
            } else if macro_rx {
                net.macro_law()
            } else {
                net.small_law()
            };
            let t = draw_law(rng, law);
            if !fdd {
                let mbs = ppp_disk(rng, p.lambda_m, radius, sd, none);
                let saps = ppp_disk(rng, p.lambda_s, radius, sd, none);
                bs_interferers(&mbs, None, false, alpha, w.p_mt / km as f64, km, act.m_dl, &mut interferers);
                bs_interferers(&saps, None, false, alpha, w.p_st / ks as f64, ks, act.s_dl, &mut interferers);
            }
            let g = if macro_rx { d.g_m } else { d.g_s };
            thinned_interferers(rng, d.lambda_u_tilde, radius, sd, alpha, Some(g), w.p_ut, 1, 1.0, &mut interferers);
            if macro_rx {
                if full {
                    Signal::ZfUplink {
                        m: p.m_m,
                        k: km,
                        power: w.p_ut,
                        loss: t,
                    }
                } else {
                    Signal::Fixed(d.nu_m_u / t)
                }
            } else if full {
                Signal::ZfGain {
                    m: p.m_s,
                    k: ks,
                    scale: w.p_ut / t,
                }
            } else {
                Signal::Gamma {
                    scale: w.p_ut / t,
                    shape: d.delta_s,
                }
            }
        }
        Link::BackhaulDl => {
            let mut rejected = 0;
            let mbs = loop {
                let mbs = ppp_disk(rng, p.lambda_m, radius, none, sb);
                if !mbs.is_empty() {
                    break mbs;
                }
                rejected += 1;
                if rejected >= cfg.max_resamples {
                    return Err(Error::EmptyTier("mbs"));
                }
            };
            let (serving, t) = mbs
                .iter()
                .enumerate()
                .map(|(i, pt)| (i, path_loss(pt.dist(), pt.s_b, alpha)))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            bs_interferers(&mbs, Some(serving), true, alpha, w.p_mb / kbs as f64, kbs, act.b_dl, &mut interferers);
            if !fdd {
                let saps = ppp_disk(rng, p.lambda_s, radius, none, sb);
                bs_interferers(&saps, None, true, alpha, w.p_sb / p.m_s as f64, p.m_s, act.b_ul, &mut interferers);
            }
            let signal = if full {
                let law = net.backhaul_law();
                let mut losses = vec![t; p.m_s];
                for _ in 1..p.k_b {
                    let l = draw_law(rng, law);
                    losses.extend(std::iter::repeat_n(l, p.m_s));
                }
                Signal::ZfDownlink {
                    m: p.m_m,
                    power: w.p_mb,
                    losses,
                }
            } else {
                Signal::Fixed(d.nu_b_d)
            };
            return Ok((Scenario { signal, interferers }, rejected));
        }
        Link::BackhaulUl => {
            let law = if fdd {
                fdd_serving_law(net, link)
            } else {
                net.backhaul_law()
            };
            let t = draw_law(rng, law);
            if !fdd {
                let mbs = ppp_disk(rng, p.lambda_m, radius, none, sb);
                bs_interferers(&mbs, None, true, alpha, w.p_mb / kbs as f64, kbs, act.b_dl, &mut interferers);
            }
            thinned_interferers(
                rng,
                act.b_ul * p.k_b as f64 * p.lambda_m,
                radius,
                sb,
                alpha,
                Some(d.a_b),
                w.p_sb / p.m_s as f64,
                p.m_s,
                1.0,
                &mut interferers,
            );
            if full {
                Signal::ZfUplink {
                    m: p.m_m,
                    k: kbs,
                    power: w.p_sb,
                    loss: t,
                }
            } else {
                Signal::Fixed(d.nu_b_u / t)
            }
        }
    };
    Ok((Scenario { signal, interferers }, 0))
}

fn signal_draw<R: Rng>(signal: &Signal, rng: &mut R, fading: &mut Fading) -> Result<(f64, Option<f64>)> {
    Ok(match signal {
        Signal::Fixed(v) => (*v, None),
        Signal::Gamma { scale, shape } => (scale * fading.draw(rng, *shape), None),
        Signal::ZfDownlink { m, power, losses } => {
            let k = losses.len();
            let h = complex_gaussian(rng, k, *m);
            let inv = hermitian_inverse(&h * h.adjoint()).map_err(|_| Error::RankDeficient { rows: k, cols: *m })?;
            let tr: f64 = losses.iter().enumerate().map(|(i, l)| l * inv[(i, i)].re).sum();
            let eq = power * (*m - k) as f64 / losses.iter().sum::<f64>();
            (power / tr, Some(eq))
        }
        Signal::ZfUplink { m, k, power, loss } => {
            let h = complex_gaussian(rng, *m, *k);
            let inv = hermitian_inverse(h.adjoint() * &h).map_err(|_| Error::RankDeficient { rows: *m, cols: *k })?;
            let eq = power * (*m - *k) as f64 / loss;
            (power / (loss * inv[(0, 0)].re), Some(eq))
        }
        Signal::ZfGain { m, k, scale } => {
            let h = complex_gaussian(rng, *k, *m);
            let inv = hermitian_inverse(&h * h.adjoint()).map_err(|_| Error::RankDeficient { rows: *k, cols: *m })?;
            (scale / inv[(0, 0)].re, None)
        }
    })
}

fn check_tdd_or_fdd(net: &Network) -> Result<()> {
    match net.params.duplex {
        Duplex::Tdd { .. } | Duplex::Fdd { .. } => Ok(()),
    }
}

/// SINR draws of one replicate: one topology, `draws_per_replicate` fading
/// and duplex draws. Also returns the number of rejected topologies.
pub fn sinr_samples(link: Link, net: &Network, cfg: &SimConfig, replicate: u64) -> Result<(Vec<SinrSample>, usize)> {
    cfg.validate()?;
    check_tdd_or_fdd(net)?;
    let radius = cfg.radius(&net.params);
    let mut rng = rng_for(cfg.seed, link_purpose(link), replicate);
    let (scenario, rejected) = build_scenario(link, net, cfg, radius, &mut rng)?;
    let mut fading = Fading::new();
    let sigma2 = net.params.sigma2;
    let mut out = Vec::with_capacity(cfg.draws_per_replicate);
    for _ in 0..cfg.draws_per_replicate {
        let mut interference = 0.0;
        for i in &scenario.interferers {
            if i.activity < 1.0 && rng.random::<f64>() >= i.activity {
                continue;
            }
            interference += i.amp * fading.draw(&mut rng, i.shape) / i.loss;
        }
        let (s, eq) = signal_draw(&scenario.signal, &mut rng, &mut fading)?;
        let denom = interference + sigma2;
        let sinr = s / denom;
        out.push(SinrSample {
            sinr,
            equivalent: eq.map_or(sinr, |e| e / denom),
        });
    }
    Ok((out, rejected))
}

/// Monte Carlo ergodic rate of one link, prefactors included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub ci95_halfwidth: f64,
    pub replicates: usize,
    /// Topologies discarded because the typical UE attached to the other tier.
    pub rejected: usize,
}

impl RateEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.ci95_halfwidth
    }
}

/// Mean of the per-replicate averages of `log2(1 + SINR)`, scaled by the
/// link's bandwidth-split factor, with a normal 95% interval.
pub fn estimate_rate(link: Link, net: &Network, cfg: &SimConfig) -> Result<RateEstimate> {
    cfg.validate()?;
    let pref = zeta_prefactor(link, net.params.zeta_b, net)
        * match (net.params.duplex, link.is_backhaul(), link.is_downlink()) {
            (Duplex::Tdd { .. }, _, _) => 1.0,
            (Duplex::Fdd { xi_d, .. }, false, true) => xi_d,
            (Duplex::Fdd { xi_d, .. }, false, false) => 1.0 - xi_d,
            (Duplex::Fdd { xi_b, .. }, true, true) => xi_b,
            (Duplex::Fdd { xi_b, .. }, true, false) => 1.0 - xi_b,
        };
    let per: Vec<(f64, usize)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let (samples, rejected) = sinr_samples(link, net, cfg, r)?;
            let v = samples.iter().map(|s| s.sinr.ln_1p()).sum::<f64>() / samples.len() as f64;
            Ok((pref * v / std::f64::consts::LN_2, rejected))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = per.iter().map(|v| v.0).sum::<f64>() / n;
    let var = if per.len() > 1 {
        per.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RateEstimate {
        mean,
        ci95_halfwidth: 1.959_963_984_540_054 * (var / n).sqrt(),
        replicates: per.len(),
        rejected: per.iter().map(|v| v.1).sum(),
    })
}

/// One PPP tier of an interference field in `y = L^δ` space.
#[derive(Debug, Clone, Copy)]
struct LaplaceTier {
    /// Intensity per unit `y`.
    density: f64,
    /// Exclusion: only `y > y0` contributes.
    y0: f64,
    amp: f64,
    shape: usize,
    /// Keep probability `1 - exp(-g y)`.
    thin: Option<f64>,
}

fn laplace_tiers(kind: LaplaceKind, t: Option<f64>, net: &Network) -> Result<Vec<LaplaceTier>> {
    let d = &net.derived;
    let p = &net.params;
    let w = &net.powers;
    let act = d.activity;
    let delta = d.delta;
    let pi = std::f64::consts::PI;
    let serving = || {
        t.ok_or_else(|| Error::InvalidParams(format!("{} requires the serving path loss", kind.name())))
    };
    let tier = |density: f64, y0: f64, amp: f64, shape: usize, thin: Option<f64>| LaplaceTier {
        density,
        y0,
        amp,
        shape,
        thin,
    };
    let km = p.k_m as f64;
    let ks = p.k_s as f64;
    let kbs = p.k_b * p.m_s;
    let ue_density = d.lambda_u_tilde * pi * d.e_sd_delta;
    Ok(match kind {
        LaplaceKind::UeDl => vec![tier(ue_density, 0.0, w.p_ut, 1, None)],
        LaplaceKind::OcMacroUe => {
            let t = serving()?;
            vec![
                tier(act.m_dl * d.a_m, t.powf(delta), w.p_mt / km, p.k_m, None),
                tier(act.s_dl * d.a_s, (t * w.p_st / w.p_mt).powf(delta), w.p_st / ks, p.k_s, None),
            ]
        }
        LaplaceKind::OcSmallUe => {
            let t = serving()?;
            vec![
                tier(act.s_dl * d.a_s, t.powf(delta), w.p_st / ks, p.k_s, None),
                tier(act.m_dl * d.a_m, (t * w.p_mt / w.p_st).powf(delta), w.p_mt / km, p.k_m, None),
            ]
        }
        LaplaceKind::MbsUl => vec![
            tier(act.m_dl * d.a_m, 0.0, w.p_mt / km, p.k_m, None),
            tier(act.s_dl * d.a_s, 0.0, w.p_st / ks, p.k_s, None),
        ],
        LaplaceKind::UeUlMacro => vec![tier(ue_density, 0.0, w.p_ut, 1, Some(d.g_m))],
        LaplaceKind::UeUlSmall => vec![tier(ue_density, 0.0, w.p_ut, 1, Some(d.g_s))],
        LaplaceKind::BhSapOnDl => vec![tier(
            act.b_ul * p.lambda_s * pi * d.e_sb_delta,
            0.0,
            w.p_sb / p.m_s as f64,
            p.m_s,
            None,
        )],
        LaplaceKind::BhMbsDl => {
            let t = serving()?;
            vec![tier(act.b_dl * d.a_b, t.powf(delta), w.p_mb / kbs as f64, kbs, None)]
        }
        LaplaceKind::BhMbsUl => vec![tier(act.b_dl * d.a_b, 0.0, w.p_mb / kbs as f64, kbs, None)],
        LaplaceKind::BhSapUl => vec![tier(
            act.b_ul * p.k_b as f64 * d.a_b,
            0.0,
            w.p_sb / p.m_s as f64,
            p.m_s,
            Some(d.a_b),
        )],
    })
}

/// Mean number of sampled points per tier in the near window.
const NEAR_POINTS: f64 = 32.0;

/// Typical serving path loss `G^{-1/δ}` of the law a conditional kind uses.
pub fn typical_serving_loss(kind: LaplaceKind, net: &Network) -> Option<f64> {
    match kind {
        LaplaceKind::OcMacroUe => Some(net.macro_law().typical()),
        LaplaceKind::OcSmallUe => Some(net.small_law().typical()),
        LaplaceKind::BhMbsDl => Some(net.backhaul_law().typical()),
        _ => None,
    }
}

/// The `z` at which the closed-form exponent equals one.
pub fn laplace_reference_z(kind: LaplaceKind, t: Option<f64>, net: &Network) -> Result<f64> {
    let cfg = QuadConfig::default().tighter();
    let f = |z: f64| laplace_exponent(kind, z, t, net, &cfg);
    let (mut lo, mut hi) = (1e-30f64, 1e30f64);
    if f(hi)? < 1.0 {
        return Err(Error::DegenerateModel(format!(
            "{} interference is negligible at every scale",
            kind.name()
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Empirical `E[e^{-zI}]` for each `z`, with standard errors.
///
/// Each tier is sampled as a PPP in `y = L^δ` on a near window holding
/// about 32 points, with Γ(K) fading and the tier's thinning; the
/// contribution of the far field beyond the window enters through its
/// probability generating functional, evaluated by quadrature.
pub fn empirical_laplace(
    kind: LaplaceKind,
    zs: &[f64],
    t: Option<f64>,
    net: &Network,
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(Error::InvalidParams("need at least 2 samples".into()));
    }
    let delta = net.derived.delta;
    let inv = 1.0 / delta;
    let tiers: Vec<LaplaceTier> = laplace_tiers(kind, t, net)?
        .into_iter()
        .filter(|tr| tr.density > 0.0 && tr.amp > 0.0)
        .collect();
    let cfg = QuadConfig::default().tighter();
    let mut far = vec![0.0; zs.len()];
    for tr in &tiers {
        let width = NEAR_POINTS / tr.density;
        let start = tr.y0 + width;
        for (fz, &z) in far.iter_mut().zip(zs) {
            let k = tr.shape as f64;
            let r = try_integrate_semi_infinite_scaled(
                |u| {
                    let y = start + u;
                    let fade = -(-k * (z * tr.amp / (k * y.powf(inv)) * k).ln_1p()).exp_m1();
                    let keep = tr.thin.map_or(1.0, |g| -(-g * y).exp_m1());
                    Ok(fade * keep)
                },
                start.max(width),
                &cfg,
                "far field",
            )?;
            *fz += tr.density * r.value;
        }
    }
    let chunk = 10_000usize;
    let chunks = samples.div_ceil(chunk);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, LAPLACE_PURPOSE, c);
            let mut fading = Fading::new();
            let n = chunk.min(samples - c as usize * chunk);
            let mut acc = vec![(0.0, 0.0); zs.len()];
            for _ in 0..n {
                let mut field = 0.0;
                for tr in &tiers {
                    let width = NEAR_POINTS / tr.density;
                    let count = Poisson::new(NEAR_POINTS).unwrap().sample(&mut rng) as usize;
                    for _ in 0..count {
                        let y = tr.y0 + width * rng.random::<f64>();
                        if let Some(g) = tr.thin {
                            if rng.random::<f64>() >= -(-g * y).exp_m1() {
                                continue;
                            }
                        }
                        field += tr.amp * fading.draw(&mut rng, tr.shape) / y.powf(inv);
                    }
                }
                for (a, &z) in acc.iter_mut().zip(zs) {
                    let v = (-z * field).exp();
                    a.0 += v;
                    a.1 += v * v;
                }
            }
            acc
        })
        .collect();
    let n = samples as f64;
    Ok(zs
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |a, c| (a.0 + c[i].0, a.1 + c[i].1));
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            let scale = (-far[i]).exp();
            (mean * scale, (var / n).sqrt() * scale)
        })
        .collect())
}

/// Largest residual of the large-system ZF fixed point for path losses
/// `losses` served by `m` antennas.
///
/// With `J = K M/(M-K)` and `1/e_i = M/(M-K)·L_i`, checks
/// `L_i^{-1}/e_i = 1 + J/M` for each `i` and `J = Σ_j L_j^{-1} e_j^{-1}`,
/// relative to the right-hand sides.
pub fn fixed_point_residual(losses: &[f64], m: usize) -> Result<f64> {
    let k = losses.len();
    if k == 0 || k >= m {
        return Err(Error::InvalidParams(format!("need 1 <= K < M, got K={k} M={m}")));
    }
    let (kf, mf) = (k as f64, m as f64);
    let j = kf * mf / (mf - kf);
    let rhs = 1.0 + j / mf;
    let mut worst: f64 = 0.0;
    let mut sum = 0.0;
    for &l in losses {
        let inv_e = mf / (mf - kf) * l;
        let lhs = inv_e / l;
        worst = worst.max((lhs - rhs).abs() / rhs);
        sum += inv_e / l;
    }
    Ok(worst.max((sum - j).abs() / j))
}
