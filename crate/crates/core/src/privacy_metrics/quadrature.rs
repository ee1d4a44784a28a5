//! Log-domain adaptive quadrature for the noise-marginalized
//! column likelihoods.

use crate::error::{Error, Result};

pub const RELATIVE_TOLERANCE: f64 = 1e-12;
const MAX_DEPTH: u32 = 60;

/// Maximizer of a concave function on `[lo, hi]` by golden-section search.
fn concave_argmax(lo: f64, hi: f64, f: &impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [lo, hi, mid]
        .into_iter()
        .fold(mid, |best, x| if f(x) > f(best) { x } else { best })
}

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
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded
/// 7-point Gauss rule.
fn kronrod(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = g(c);
    let mut k = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let pair = g(c - h * XGK[i]) + g(c + h * XGK[i]);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (k * h, (k - gauss) * h)
}

fn adaptive(g: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> Option<f64> {
    let (value, err) = kronrod(g, a, b);
    if err.abs() <= eps {
        return Some(value);
    }
    let m = 0.5 * (a + b);
    if depth == 0 || m <= a || m >= b {
        return None;
    }
    Some(adaptive(g, a, m, 0.5 * eps, depth - 1)? + adaptive(g, m, b, 0.5 * eps, depth - 1)?)
}

/// Panels shrinking geometrically towards `peak`, so a narrow spike at the
/// maximizer is always resolved.
fn panels_around(lo: f64, hi: f64, peak: f64) -> Vec<(f64, f64)> {
    const LEVELS: i32 = 34;
    let mut out = Vec::with_capacity(2 * LEVELS as usize + 2);
    for (side, sign) in [(peak - lo, -1.0), (hi - peak, 1.0)] {
        if side <= 0.0 {
            continue;
        }
        let mut outer = side;
        for k in 1..=LEVELS {
            let inner = side * 0.5f64.powi(k);
            let (a, b) = (peak + sign * outer, peak + sign * inner);
            out.push(if a < b { (a, b) } else { (b, a) });
            outer = inner;
        }
        let (a, b) = (peak + sign * outer, peak);
        out.push(if a < b { (a, b) } else { (b, a) });
    }
    out
}

/// `ln ∫_lo^hi exp(log_f(r)) dr` for a concave `log_f`.
///
/// Adaptive Gauss-Kronrod (7/15) bisection over panels that shrink
/// geometrically towards the maximizer; the integrand is rescaled by its
/// maximum. A coarse pass fixes the scale for the relative tolerance of
/// the final pass.
pub fn log_integrate_concave(lo: f64, hi: f64, log_f: impl Fn(f64) -> f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::param("quadrature", format!("empty interval [{lo}, {hi}]")));
    }
    let fail = || Error::Quadrature {
        lo,
        hi,
        tolerance: RELATIVE_TOLERANCE,
    };
    let peak = concave_argmax(lo, hi, &log_f);
    let top = log_f(peak);
    if top == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if !top.is_finite() {
        return Err(fail());
    }
    let g = |r: f64| (log_f(r) - top).exp();
    let panels = panels_around(lo, hi, peak);
    let sum = |eps_of: &dyn Fn(f64, f64) -> f64| -> Result<f64> {
        panels.iter().try_fold(0.0, |acc, &(a, b)| {
            Ok(acc + adaptive(&g, a, b, eps_of(a, b), MAX_DEPTH).ok_or_else(fail)?)
        })
    };
    let coarse = sum(&|a, b| 1e-6 * (b - a))?;
    if !(coarse > 0.0) {
        return Err(fail());
    }
    let eps = RELATIVE_TOLERANCE * coarse / panels.len() as f64;
    let total = sum(&|_, _| eps)?;
    Ok(top + total.ln())
}

/// Log of `q^s (1 - q)^(m - s)` with the convention `0 ln 0 = 0`.
#[inline]
pub fn log_binomial_kernel(q: f64, s: u64, m: u64) -> f64 {
    let ones = if s == 0 { 0.0 } else { s as f64 * q.ln() };
    let zeros = if s == m { 0.0 } else { (m - s) as f64 * (1.0 - q).ln() };
    ones + zeros
}

/// `ln( (1/a) ∫_0^a w(r) q(r)^s (1 - q(r))^(m - s) dr )` with
/// `q(r) = p + (1 - 2p) r`, for a weight `w(r) = w0 + w1 r` that is
/// nonnegative on `[0, a]`.
///
/// The binomial kernel is evaluated relative to its value at the
/// unweighted maximizer with `ln_1p`, which keeps full relative precision
/// near the peak even when `m` is large.
pub fn log_noise_marginal(p: f64, s: u64, m: u64, a: f64, weight: (f64, f64)) -> Result<f64> {
    if s > m {
        return Err(Error::param("s", format!("{s} ones in {m} samples")));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::param("a_n", format!("must lie in (0, 1], got {a}")));
    }
    let slope = 1.0 - 2.0 * p;
    let r_ref = if slope == 0.0 {
        0.0
    } else {
        ((s as f64 / m.max(1) as f64 - p) / slope).clamp(0.0, a)
    };
    let q_ref = p + slope * r_ref;
    let (ones, zeros) = (s as f64, (m - s) as f64);
    let (w0, w1) = weight;
    let log_f = |r: f64| {
        let w = w0 + w1 * r;
        let lw = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
        let dq = slope * (r - r_ref);
        let up = if s == 0 { 0.0 } else { ones * (dq / q_ref).ln_1p() };
        let down = if s == m { 0.0 } else { zeros * (-dq / (1.0 - q_ref)).ln_1p() };
        lw + up + down
    };
    Ok(log_binomial_kernel(q_ref, s, m) + log_integrate_concave(0.0, a, log_f)? - a.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_integrals() {
        let v = log_integrate_concave(0.0, 1.0, |x: f64| 2.0 * (1.0 + x).ln()).unwrap();
        // ∫ (1+x)^2 = 7/3
        assert!((v.exp() - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_peak_inside_interval() {
        // ∫_0^1 exp(-(x - 0.3)^2 / (2 * 1e-6)) dx ≈ sqrt(2 pi) * 1e-3
        let v = log_integrate_concave(0.0, 1.0, |x: f64| -(x - 0.3).powi(2) / 2e-6).unwrap();
        let exact = (2.0 * std::f64::consts::PI).sqrt() * 1e-3;
        assert!((v.exp() / exact - 1.0).abs() < 1e-11, "{}", v.exp() / exact - 1.0);
    }

    #[test]
    fn constant_channel_when_p_is_half() {
        let v = log_noise_marginal(0.5, 3, 10, 0.2, (1.0, 0.0)).unwrap();
        assert!((v - 10.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_integral() {
        assert_eq!(log_integrate_concave(0.0, 1.0, |_| f64::NEG_INFINITY).unwrap(), f64::NEG_INFINITY);
    }
}
