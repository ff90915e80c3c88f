//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Value of an integral together with its estimated absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        if !(f1.is_finite() && f2.is_finite()) {
            return Err(Error::Quadrature(format!(
                "non-finite integrand near x = {}",
                c - h * x
            )));
        }
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    if !fc.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand at x = {c}")));
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Integrates `f` over `[a, b]` until the total error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    integrate_with_breaks(&mut f, &[a, b], abs_tol, rel_tol)
}

/// Same as [`integrate`] with user-supplied initial breakpoints (sorted).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    f: &mut F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    const MAX_INTERVALS: usize = 4000;
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(f, w[0], w[1])?;
            pieces.push((w[0], w[1], v, e));
        }
    }
    if pieces.is_empty() {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error });
        }
        if pieces.len() >= MAX_INTERVALS {
            // Stalled at roundoff: accept when the error is tiny relative to the value.
            if error <= 1e-12 * value.abs().max(abs_tol) * 1e3 {
                return Ok(Integral { value, error });
            }
            return Err(Error::Quadrature(format!(
                "no convergence after {MAX_INTERVALS} subintervals (error {error:e})"
            )));
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (a, b, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Ok(Integral { value, error });
        }
        let (v1, e1) = gk15(f, a, m)?;
        let (v2, e2) = gk15(f, m, b)?;
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
}

/// Fixed-order pairwise summation; the result does not depend on how the
/// caller partitions work.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn log_singular_endpoint() {
        let r = integrate(|x: f64| x.ln(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_is_flagged() {
        assert!(integrate(|x: f64| 1.0 / (x - 0.5), 0.0, 1.0, 1e-10, 0.0).is_err());
    }
}
