//! Finite-difference weights shared by the solvers and the operator checks.

/// 4th-order central first derivative at `i`.
#[inline(always)]
pub fn d1c4(u: &[f64], i: usize, inv_h: f64) -> f64 {
    (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) * (inv_h / 12.0)
}

/// 4th-order central second derivative at `i`.
#[inline(always)]
pub fn d2c4(u: &[f64], i: usize, inv_h2: f64) -> f64 {
    (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) * (inv_h2 / 12.0)
}

/// One-sided 4th-order first-derivative rows for the first two points of a
/// left boundary. Row `k` applies to `u[0..6]`.
pub const D1_LEFT: [[f64; 6]; 2] = [
    [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25, 0.0],
    [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0, 0.0],
];

/// One-sided 4th-order second-derivative rows for the first two points.
pub const D2_LEFT: [[f64; 6]; 2] = [
    [45.0 / 12.0, -154.0 / 12.0, 214.0 / 12.0, -156.0 / 12.0, 61.0 / 12.0, -10.0 / 12.0],
    [10.0 / 12.0, -15.0 / 12.0, -4.0 / 12.0, 14.0 / 12.0, -6.0 / 12.0, 1.0 / 12.0],
];

/// Kreiss–Oliger sixth difference, scaled so that `σ · ko6 / h` damps the
/// grid-scale mode at rate `σ / h`.
#[inline(always)]
pub fn ko6(u: &[f64], i: usize) -> f64 {
    (u[i - 3] + u[i + 3] - 6.0 * (u[i - 2] + u[i + 2]) + 15.0 * (u[i - 1] + u[i + 1]) - 20.0 * u[i])
        / 64.0
}

/// 6th-order central first derivative of a function of one variable.
pub fn deriv6<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let a = f(x + h) - f(x - h);
    let b = f(x + 2.0 * h) - f(x - 2.0 * h);
    let c = f(x + 3.0 * h) - f(x - 3.0 * h);
    (45.0 * a - 9.0 * b + c) / (60.0 * h)
}

/// 4th-order central first derivative of a function of one variable.
pub fn deriv4<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(x: f64) -> f64 {
        1.0 + x * (2.0 + x * (-3.0 + x * (0.5 + x * 0.25)))
    }

    #[test]
    fn central_stencils_exact_on_quartics() {
        let h = 0.1;
        let u: Vec<f64> = (0..9).map(|i| poly(i as f64 * h)).collect();
        let x = 4.0 * h;
        let d1 = 2.0 + x * (-6.0 + x * (1.5 + x));
        let d2 = -6.0 + x * (3.0 + 3.0 * x);
        assert!((d1c4(&u, 4, 1.0 / h) - d1).abs() < 1e-10);
        assert!((d2c4(&u, 4, 1.0 / (h * h)) - d2).abs() < 1e-9);
        assert!(ko6(&u, 4).abs() < 1e-12);
    }

    #[test]
    fn one_sided_rows_exact_on_quartics() {
        let h = 0.05;
        let u: Vec<f64> = (0..6).map(|i| poly(i as f64 * h)).collect();
        for k in 0..2 {
            let x = k as f64 * h;
            let d1: f64 = D1_LEFT[k].iter().zip(&u).map(|(w, v)| w * v).sum::<f64>() / h;
            let d2: f64 = D2_LEFT[k].iter().zip(&u).map(|(w, v)| w * v).sum::<f64>() / (h * h);
            assert!((d1 - (2.0 + x * (-6.0 + x * (1.5 + x)))).abs() < 1e-9, "row {k}");
            assert!((d2 - (-6.0 + x * (3.0 + 3.0 * x))).abs() < 1e-7, "row {k}");
        }
    }

    #[test]
    fn ko_damps_grid_mode() {
        let u: Vec<f64> = (0..7).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(ko6(&u, 3), -u[3]);
    }

    #[test]
    fn function_derivatives() {
        let d6 = deriv6(f64::sin, 0.7, 0.05);
        let d4 = deriv4(f64::sin, 0.7, 0.01);
        assert!((d6 - 0.7f64.cos()).abs() < 1e-10);
        assert!((d4 - 0.7f64.cos()).abs() < 1e-9);
    }
}
