//! Scalar numerics: adaptive Gauss–Kronrod quadrature, bisection and
//! golden-section search.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
    #[error("quadrature did not reach tolerance (estimate {estimate}, error {error:e})")]
    NoConvergence { estimate: f64, error: f64 },
    #[error("root is not bracketed by [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and |K15 − G7| on [a, b].
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite { at: c });
    }
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let (l, r) = (c - h * x, c + h * x);
        let (fl, fr) = (f(l), f(r));
        if !fl.is_finite() {
            return Err(QuadError::NonFinite { at: l });
        }
        if !fr.is_finite() {
            return Err(QuadError::NonFinite { at: r });
        }
        k += WGK[j] * (fl + fr);
        if j % 2 == 1 {
            g += WG[j / 2] * (fl + fr);
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

/// ∫_a^b f by globally adaptive G7–K15 bisection until the summed error
/// estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (first, err) = gk15(&mut f, a, b)?;
    let mut intervals = vec![(a, b, first, err)];
    let mut total = first;
    let mut total_err = err;
    for _ in 0..2000 {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, val, e) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Cannot split further; keep the estimate.
            intervals.push((lo, hi, val, 0.0));
            total_err -= e;
            continue;
        }
        let (v1, e1) = gk15(&mut f, lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, hi)?;
        total += v1 + v2 - val;
        total_err += e1 + e2 - e;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated rounding in the running totals.
    let total: f64 = intervals.iter().map(|i| i.2).sum();
    let total_err: f64 = intervals.iter().map(|i| i.3).sum();
    if total_err <= abs_tol.max(rel_tol * total.abs()) {
        Ok(total)
    } else {
        Err(QuadError::NoConvergence {
            estimate: total,
            error: total_err,
        })
    }
}

/// Root of a continuous `f` with a sign change on `[lo, hi]`, to bracket
/// width `tol` (or until the midpoint stops moving).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, QuadError> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(QuadError::NotBracketed { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimiser of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_smooth_integrands() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((v - (32.0 - 8.0)).abs() < 1e-12);
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-14, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} = 2
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-11, 1e-11).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        assert!(matches!(
            integrate(|x| 1.0 / (x - 0.5), 0.0, 1.0, 1e-10, 1e-10),
            Err(QuadError::NonFinite { .. })
        ));
    }

    #[test]
    fn roots_and_minima() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-12).is_err());
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
    }
}
