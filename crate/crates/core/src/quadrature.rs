//! Adaptive Gauss-Kronrod quadrature on finite and semi-infinite intervals.
//!
//! The semi-infinite driver maps `(0, ∞)` onto `(0, 1)` with
//! `x = s·v/(1-v)` and then bisects the subinterval with the largest error
//! estimate until the total estimate falls under tolerance.

use crate::error::{Error, Result};

/// Tolerances and subdivision budget for one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 200,
        }
    }
}

impl QuadConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let cfg = Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || self.max_subdivisions == 0 {
            return Err(Error::InvalidParams(format!(
                "quadrature tolerances must be positive and the budget nonzero: {self:?}"
            )));
        }
        Ok(())
    }

    /// Same budget, both tolerances one decade tighter.
    pub fn tighter(&self) -> Self {
        Self {
            rel_tol: self.rel_tol / 10.0,
            abs_tol: self.abs_tol / 10.0,
            ..*self
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn target(&self, value: f64) -> f64 {
        (self.rel_tol * value.abs()).max(self.abs_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn checked<F>(f: &mut F, x: f64, context: &str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let y = f(x)?;
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFiniteIntegrand {
            context: context.to_string(),
            at: x,
        })
    }
}

/// One G7K15 panel with the usual QUADPACK error heuristic.
fn gk15<F>(f: &mut F, a: f64, b: f64, context: &str) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = checked(f, center, context)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut f1 = [0.0; 7];
    let mut f2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = checked(f, center - dx, context)?;
        let hi = checked(f, center + dx, context)?;
        f1[j] = lo;
        f2[j] = hi;
        kronrod += WGK[j] * (lo + hi);
        abs_sum += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((f1[j] - mean).abs() + (f2[j] - mean).abs());
    }
    let result = kronrod * half;
    let abs_result = abs_sum * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_result > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_result);
    }
    Ok(Segment {
        a,
        b,
        value: result,
        error,
    })
}

/// Adaptive bisection on `[a, b]` for a fallible integrand.
pub fn try_integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig, context: &str) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{context}: finite limits required, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 1,
        });
    }
    let first = gk15(&mut f, a, b, context)?;
    let mut evaluations = 15;
    let mut segments = vec![first];
    let mut value = first.value;
    let mut error = first.error;
    let mut subdivisions = 1;
    while error > cfg.target(value) {
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::NonConvergence {
                context: context.to_string(),
                subdivisions,
                value,
                error,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| {
                if s.error > acc.1 {
                    (i, s.error)
                } else {
                    acc
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval collapsed to adjacent floats; nothing left to refine
            return Err(Error::NonConvergence {
                context: context.to_string(),
                subdivisions,
                value,
                error,
            });
        }
        let left = gk15(&mut f, seg.a, mid, context)?;
        let right = gk15(&mut f, mid, seg.b, context)?;
        evaluations += 30;
        subdivisions += 1;
        segments.push(left);
        segments.push(right);
        // resum to keep rounding drift out of the running totals
        value = segments.iter().map(|s| s.value).sum();
        error = segments.iter().map(|s| s.error).sum();
    }
    Ok(QuadResult {
        value,
        error_estimate: error,
        evaluations,
    })
}

/// Adaptive quadrature of `f` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    try_integrate(|x| Ok(f(x)), a, b, cfg, "integrate")
}

/// Fallible semi-infinite integral with the map `x = scale·v/(1-v)`.
///
/// `scale` should sit near where the integrand does its work; a poor choice
/// costs subdivisions, not accuracy. Points whose image overflows contribute
/// zero.
pub fn try_integrate_semi_infinite_scaled<F>(
    mut f: F,
    scale: f64,
    cfg: &QuadConfig,
    context: &str,
) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{context}: map scale must be positive and finite, got {scale}"
        )));
    }
    try_integrate(
        |v| {
            let w = 1.0 - v;
            let x = scale * v / w;
            if !x.is_finite() {
                return Ok(0.0);
            }
            let jac = scale / (w * w);
            let y = f(x)?;
            if y == 0.0 {
                Ok(0.0)
            } else {
                Ok(y * jac)
            }
        },
        0.0,
        1.0,
        cfg,
        context,
    )
}

/// `∫_0^∞ f(x) dx` after the substitution `x = e^s`, for integrands that do
/// their work across many decades.
///
/// The real line is split at `s = ln(center)` and each half is mapped with
/// scale `width` (in natural-log units).
pub fn try_integrate_log_scaled<F>(
    mut f: F,
    center: f64,
    width: f64,
    cfg: &QuadConfig,
    context: &str,
) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(center > 0.0 && center.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{context}: log-map center must be positive and finite, got {center}"
        )));
    }
    let c = center.ln();
    let mut g = |s: f64| -> Result<f64> {
        let x = s.exp();
        if x == 0.0 || !x.is_finite() {
            return Ok(0.0);
        }
        let y = f(x)?;
        if y == 0.0 {
            Ok(0.0)
        } else {
            Ok(y * x)
        }
    };
    let hi = try_integrate_semi_infinite_scaled(|u| g(c + u), width, cfg, context)?;
    let lo = try_integrate_semi_infinite_scaled(|u| g(c - u), width, cfg, context)?;
    Ok(QuadResult {
        value: hi.value + lo.value,
        error_estimate: hi.error_estimate + lo.error_estimate,
        evaluations: hi.evaluations + lo.evaluations,
    })
}

/// `∫_0^∞ f(x) dx` with the unit map `x = v/(1-v)`.
pub fn integrate_semi_infinite<F>(mut f: F, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    try_integrate_semi_infinite_scaled(|x| Ok(f(x)), 1.0, cfg, "semi-infinite")
}

/// `∫_0^∞ f(x) dx` with the map scaled so that `v = 1/2` lands on `scale`.
pub fn integrate_semi_infinite_scaled<F>(mut f: F, scale: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    try_integrate_semi_infinite_scaled(|x| Ok(f(x)), scale, cfg, "semi-infinite")
}

/// `∫_0^∞ f(x) dx` by geometric panels `[0,h], [h,2h], [2h,4h], …`, each
/// integrated adaptively, stopping once two consecutive panels add less than
/// the tolerance. An independent strategy used to cross-check the mapped one.
pub fn integrate_panels<F>(mut f: F, first_width: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if !(first_width > 0.0 && first_width.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "panel width must be positive, got {first_width}"
        )));
    }
    let panel_cfg = cfg.tighter();
    let mut total = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut lo = 0.0;
    let mut hi = first_width;
    let mut quiet = 0;
    for _ in 0..200 {
        let r = try_integrate(|x| Ok(f(x)), lo, hi, &panel_cfg, "panel")?;
        total += r.value;
        error += r.error_estimate;
        evaluations += r.evaluations;
        if r.value.abs() <= cfg.target(total) {
            quiet += 1;
            if quiet == 2 {
                return Ok(QuadResult {
                    value: total,
                    error_estimate: error + r.value.abs(),
                    evaluations,
                });
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::NonConvergence {
        context: "panel doubling".into(),
        subdivisions: 200,
        value: total,
        error,
    })
}

/// Iterated `∫_0^∞ ∫_0^∞ f(z, t) dt dz`, outer over `z`, inner over `t`.
///
/// The inner integrals run one decade tighter than the outer tolerance.
pub fn integrate_double<F>(f: F, cfg_outer: &QuadConfig, cfg_inner: &QuadConfig) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64,
{
    let inner_cfg = QuadConfig {
        rel_tol: cfg_inner.rel_tol.min(cfg_outer.rel_tol / 10.0),
        abs_tol: cfg_inner.abs_tol.min(cfg_outer.abs_tol / 10.0),
        max_subdivisions: cfg_inner.max_subdivisions,
    };
    let mut evaluations = 0;
    let outer = try_integrate_semi_infinite_scaled(
        |z| {
            let r = try_integrate_semi_infinite_scaled(|t| Ok(f(z, t)), 1.0, &inner_cfg, "inner")?;
            evaluations += r.evaluations;
            Ok(r.value)
        },
        1.0,
        cfg_outer,
        "outer",
    )?;
    Ok(QuadResult {
        evaluations: evaluations.max(outer.evaluations),
        ..outer
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{gamma, path_loss_pdf};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn exponential() {
        let r = integrate_semi_infinite(|x| (-x).exp(), &QuadConfig::default()).unwrap();
        assert!(close(r.value, 1.0, 1e-10), "{r:?}");
        assert!(r.error_estimate >= 0.0 && r.evaluations >= 1);
    }

    #[test]
    fn gaussian_half() {
        let r = integrate_semi_infinite(|x| (-x * x).exp(), &QuadConfig::default()).unwrap();
        assert!(close(r.value, std::f64::consts::PI.sqrt() / 2.0, 1e-10));
    }

    #[test]
    fn endpoint_singularity() {
        let d = 0.5263;
        let r = integrate_semi_infinite(|x| x.powf(d - 1.0) * (-x).exp(), &QuadConfig::default())
            .unwrap();
        assert!(close(r.value, gamma(d), 1e-8), "{} vs {}", r.value, gamma(d));
    }

    #[test]
    fn finite_interval_polynomial() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadConfig::default()).unwrap();
        assert!(close(r.value, 8.0, 1e-14));
        let r = integrate(|x| x, 1.0, 1.0, &QuadConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn double_separable() {
        let cfg = QuadConfig::default();
        let r = integrate_double(|z, t| (-z - t).exp(), &cfg, &cfg).unwrap();
        assert!(close(r.value, 1.0, 1e-8));
    }

    #[test]
    fn double_pdf() {
        let cfg = QuadConfig::default();
        let r = integrate_double(|z, t| (-z).exp() * path_loss_pdf(1.0, 0.5, t), &cfg, &cfg)
            .unwrap();
        assert!(close(r.value, 1.0, 1e-7), "{r:?}");
    }

    #[test]
    fn double_exponential_integral() {
        // e·E1(1) = 0.596347362323194...
        let cfg = QuadConfig::default();
        let r = integrate_double(|z, t| (-t * (1.0 + z)).exp() * (-z).exp(), &cfg, &cfg).unwrap();
        assert!(close(r.value, 0.596_347_362_323_194_1, 1e-8), "{r:?}");
    }

    #[test]
    fn panels_agree_with_map() {
        let cfg = QuadConfig::default();
        let f = |x: f64| x.powf(1.5) * (-x / 3.0).exp() / (1.0 + x);
        let a = integrate_semi_infinite(f, &cfg).unwrap().value;
        let b = integrate_panels(f, 1.0, &cfg).unwrap().value;
        assert!(close(a, b, 1e-7), "{a} vs {b}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = QuadConfig::new(1e-14, 1e-300, 3).unwrap();
        let err = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { subdivisions: 3, .. }));
    }

    #[test]
    fn non_finite_is_reported() {
        let err = integrate(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, &QuadConfig::default())
            .unwrap_err();
        assert_eq!(err.category(), "non-finite");
    }

    #[test]
    fn bad_config_rejected() {
        assert!(QuadConfig::new(0.0, 1e-12, 10).is_err());
        assert!(QuadConfig::new(1e-8, 1e-12, 0).is_err());
    }

    #[test]
    fn log_map_spans_decades() {
        // ∫ 1/((1+x)(1+x/1e6)) dx = ln(1e6)·1e6/(1e6-1)
        let cfg = QuadConfig::default();
        let r = try_integrate_log_scaled(|x| Ok(1.0 / ((1.0 + x) * (1.0 + x / 1e6))), 1e3, 4.0, &cfg, "log")
            .unwrap();
        let exact = (1e6f64).ln() * 1e6 / (1e6 - 1.0);
        assert!((r.value - exact).abs() < 1e-8 * exact, "{}", r.value);
        let r = try_integrate_log_scaled(|x| Ok((-x).exp()), 1e-3, 3.0, &cfg, "log").unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }
}
