//! Property suites over the geometry, the conjugated operator and the
//! multiplier identity, shared by the CLI and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::logspace;
use crate::error::Result;
use crate::geometry::{
    bl_metric, build_radial_maps, kerr_schwarzschild_gap, kerr_star_metric, tortoise, ttilde_star_metric,
    KerrParams, PHI, R, T, THETA,
};
use crate::multipliers::{residual_study, AnalyticField, MultiplierTriple, DEFAULT_R2};
use crate::operators::{conjugation_check, ConjugationReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryReport {
    pub points: usize,
    /// Worst `|g·g⁻¹ − I|` per chart: BL, Kerr-star, t̃-star.
    pub inverse_residual: [f64; 3],
    /// Worst relative gap between `a = 0` BL components and the closed form.
    pub schwarzschild_gap: f64,
    /// Grid nodes on which `μ′ > 0`, condition (ii), `μ ≥ r*` or `g^{t̃t̃} < 0` fails.
    pub slicing_failures: usize,
    pub grid_nodes: usize,
    /// `max r²|g_K − g_S|` over each decade of `[10M, 10⁴M]`.
    pub far_field_by_decade: Vec<f64>,
}

impl GeometryReport {
    pub fn inverse_ok(&self) -> bool {
        self.inverse_residual.iter().all(|r| *r <= 1e-12)
    }

    pub fn schwarzschild_ok(&self) -> bool {
        self.schwarzschild_gap <= 1e-12
    }

    pub fn slicing_ok(&self) -> bool {
        self.slicing_failures == 0
    }

    /// The weighted gap does not grow from one decade to the next.
    pub fn far_field_bounded(&self) -> bool {
        self.far_field_by_decade.windows(2).all(|w| w[1] <= w[0] * 1.01)
    }

    pub fn passed(&self) -> bool {
        self.inverse_ok() && self.schwarzschild_ok() && self.slicing_ok() && self.far_field_bounded()
    }
}

/// Grid on which the slicing conditions are checked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlicingGrid {
    pub spin: f64,
    pub r_out: f64,
    pub h_r: f64,
    pub n_theta: usize,
}

impl Default for SlicingGrid {
    fn default() -> Self {
        SlicingGrid { spin: 0.3, r_out: 140.0, h_r: 0.1, n_theta: 16 }
    }
}

fn schwarzschild_bl(m: f64, r: f64, theta: f64) -> [[f64; 4]; 4] {
    let f = 1.0 - 2.0 * m / r;
    let mut g = [[0.0; 4]; 4];
    g[T][T] = -f;
    g[R][R] = 1.0 / f;
    g[THETA][THETA] = r * r;
    g[PHI][PHI] = (r * theta.sin()).powi(2);
    g
}

pub fn geometry_suite(points: usize, seed: u64, grid: SlicingGrid) -> Result<GeometryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inv = [0.0f64; 3];
    let mut gap = 0.0f64;
    let draw_r = |rng: &mut ChaCha8Rng, lo: f64| (lo.ln() + rng.gen::<f64>() * (1e4f64.ln() - lo.ln())).exp();
    for _ in 0..points {
        let a = rng.gen_range(-0.5..=0.5);
        let theta = rng.gen_range(0.01..std::f64::consts::PI - 0.01);
        let p = KerrParams::new(1.0, a)?;
        let maps = build_radial_maps(&p, 8.0)?;
        let r_out = draw_r(&mut rng, p.r_plus() + 0.05);
        let r_in = draw_r(&mut rng, p.r_e);
        inv[0] = inv[0].max(bl_metric(&p, r_out, theta)?.inverse_residual());
        inv[1] = inv[1].max(kerr_star_metric(&p, r_in, theta)?.inverse_residual());
        inv[2] = inv[2].max(ttilde_star_metric(&p, &maps, r_in, theta)?.inverse_residual());

        let s = KerrParams::new(1.0, 0.0)?;
        let r_s = draw_r(&mut rng, 2.05);
        let g = bl_metric(&s, r_s, theta)?.g_lower;
        let c = schwarzschild_bl(1.0, r_s, theta);
        for i in 0..4 {
            for j in 0..4 {
                gap = gap.max((g[i][j] - c[i][j]).abs() / c[i][j].abs().max(1.0));
            }
        }
    }

    let p = KerrParams::new(1.0, grid.spin)?;
    let maps = build_radial_maps(&p, 8.0)?;
    let n_r = ((grid.r_out - p.r_e) / grid.h_r).round() as usize + 1;
    let h_th = std::f64::consts::PI / grid.n_theta as f64;
    let mut failures = 0;
    for i in 0..n_r {
        let r = p.r_e + i as f64 * grid.h_r;
        let mp = maps.mu_prime(r);
        let mu_ok = !(r > 2.0 && r <= 2.5) || maps.mu(r) >= tortoise(1.0, r) - 1e-12 * (1.0 + r);
        for k in 0..grid.n_theta {
            let th = (k as f64 + 0.5) * h_th;
            let c = 1.0 - 2.0 * r / p.rho2(r, th);
            let gtt = ttilde_star_metric(&p, &maps, r, th)?.g_upper[T][T];
            if !(mp > 0.0 && 2.0 - c * mp > 0.0 && mu_ok && gtt < 0.0) {
                failures += 1;
            }
        }
    }

    let far: Vec<f64> = [(10.0, 100.0), (100.0, 1e3), (1e3, 1e4)]
        .iter()
        .map(|&(a, b)| -> Result<f64> {
            let mut m = 0.0f64;
            for r in logspace(a, b, 40) {
                for th in [0.3, 0.9, std::f64::consts::FRAC_PI_2] {
                    let d = kerr_schwarzschild_gap(&p, r, th)?;
                    m = m.max(d.iter().flatten().fold(0.0f64, |x, v| x.max(*v)) * r * r);
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;

    Ok(GeometryReport {
        points,
        inverse_residual: inv,
        schwarzschild_gap: gap,
        slicing_failures: failures,
        grid_nodes: n_r * grid.n_theta,
        far_field_by_decade: far,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorsReport {
    pub spin: f64,
    pub conjugation: ConjugationReport,
}

/// Decay of `P − □` pieces along `r ∈ [5M, 10⁴M]` for each spin.
pub fn operators_suite(spins: &[f64]) -> Result<Vec<OperatorsReport>> {
    spins
        .iter()
        .map(|&a| {
            let p = KerrParams::new(1.0, a)?;
            let maps = build_radial_maps(&p, 8.0)?;
            let conjugation = conjugation_check(&p, &maps, &logspace(5.0, 1e4, 24))?;
            Ok(OperatorsReport { spin: a, conjugation })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplierRow {
    pub spin: f64,
    pub r: f64,
    pub field: &'static str,
    pub residuals: [f64; 3],
    pub order: f64,
}

/// Divergence-identity convergence at each `(a, r)` for two analytic fields.
pub fn multipliers_suite(spins: &[f64], radii: &[f64], gamma: f64, delta: f64) -> Result<Vec<MultiplierRow>> {
    let mut rows = Vec::new();
    for &a in spins {
        let p = KerrParams::new(1.0, a)?;
        let maps = build_radial_maps(&p, 8.0)?;
        for &r in radii {
            let triple = MultiplierTriple::new(gamma, delta, 1.0, DEFAULT_R2.min(0.9 * r))?;
            for (name, f) in [("cubic", AnalyticField::cubic()), ("oscillatory", AnalyticField::oscillatory())] {
                let s = residual_study(&p, &maps, &triple, &f, [0.0, r, 0.3, 1.1], 0.2)?;
                rows.push(MultiplierRow { spin: a, r, field: name, residuals: s.residuals, order: s.order });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_suite_small() {
        let g = SlicingGrid { r_out: 20.0, h_r: 0.5, n_theta: 8, ..Default::default() };
        let rep = geometry_suite(50, 7, g).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.grid_nodes, 39 * 8);
    }

    #[test]
    fn closed_form_schwarzschild() {
        let g = schwarzschild_bl(1.0, 4.0, 1.0);
        assert_eq!(g[T][T], -0.5);
        assert_eq!(g[R][R], 2.0);
    }

    #[test]
    fn operator_report_shapes() {
        let reps = operators_suite(&[0.0]).unwrap();
        assert_eq!(reps[0].conjugation.rows.len(), 24);
        assert_eq!(reps[0].conjugation.rows[0].r2_gsr_max, 0.0);
    }

    #[test]
    fn multiplier_rows() {
        let rows = multipliers_suite(&[0.0], &[20.0], 1.6, 0.05).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.order >= 3.5));
    }
}
