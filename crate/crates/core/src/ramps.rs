//! Polynomial smoothsteps used for blends and cutoffs.

/// Quintic smoothstep: C² at both ends, 0 for z <= 0, 1 for z >= 1.
pub fn smoothstep5(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        z * z * z * (10.0 + z * (-15.0 + 6.0 * z))
    }
}

pub fn smoothstep5_prime(z: f64) -> f64 {
    if z <= 0.0 || z >= 1.0 {
        0.0
    } else {
        30.0 * z * z * (1.0 - z) * (1.0 - z)
    }
}

/// Degree-9 smoothstep: C⁴ at both ends.
pub fn smoothstep9(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        let z5 = z.powi(5);
        z5 * (126.0 + z * (-420.0 + z * (540.0 + z * (-315.0 + 70.0 * z))))
    }
}

pub fn smoothstep9_prime(z: f64) -> f64 {
    if z <= 0.0 || z >= 1.0 {
        0.0
    } else {
        // 630 z⁴(1 − z)⁴
        let w = z * (1.0 - z);
        630.0 * w * w * w * w
    }
}

/// Cutoff rising from 0 at `lo` to 1 at `hi` (C⁴).
pub fn ramp_up(x: f64, lo: f64, hi: f64) -> f64 {
    smoothstep9((x - lo) / (hi - lo))
}

pub fn ramp_up_prime(x: f64, lo: f64, hi: f64) -> f64 {
    smoothstep9_prime((x - lo) / (hi - lo)) / (hi - lo)
}

/// Bump equal to 1 on `[inner_lo, inner_hi]`, supported in `[lo, hi]` (C⁴).
pub fn plateau(x: f64, lo: f64, inner_lo: f64, inner_hi: f64, hi: f64) -> f64 {
    if x <= lo || x >= hi {
        0.0
    } else if x < inner_lo {
        ramp_up(x, lo, inner_lo)
    } else if x > inner_hi {
        1.0 - ramp_up(x, inner_hi, hi)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep9_derivative() {
        for z in [0.1, 0.37, 0.5, 0.81] {
            let h = 1e-6;
            let fd = (smoothstep9(z + h) - smoothstep9(z - h)) / (2.0 * h);
            assert!((fd - smoothstep9_prime(z)).abs() < 1e-8);
        }
        assert!((ramp_up_prime(15.0, 10.0, 20.0) - smoothstep9_prime(0.5) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn endpoints_and_symmetry() {
        for s in [smoothstep5, smoothstep9] {
            assert_eq!(s(0.0), 0.0);
            assert_eq!(s(1.0), 1.0);
            assert!((s(0.5) - 0.5).abs() < 1e-15);
            for i in 1..100 {
                let z = i as f64 / 100.0;
                assert!((s(z) + s(1.0 - z) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quintic_derivative_matches_difference() {
        let h = 1e-6;
        for i in 1..20 {
            let z = i as f64 / 20.0;
            let fd = (smoothstep5(z + h) - smoothstep5(z - h)) / (2.0 * h);
            assert!((fd - smoothstep5_prime(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn plateau_bounds() {
        for i in 0..=400 {
            let x = 2.0 + i as f64 / 100.0;
            let v = plateau(x, 2.5, 2.8, 3.2, 3.5);
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(plateau(3.0, 2.5, 2.8, 3.2, 3.5), 1.0);
        assert_eq!(plateau(2.4, 2.5, 2.8, 3.2, 3.5), 0.0);
    }
}
