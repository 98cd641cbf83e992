//! Initial data: smooth maps, a degree-1 bubble, spinor Fourier modes and
//! seeded random band-limited fields.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clifford::{mode_spinor, tangency_project, VectorSpinorField};
use crate::grid::{GridSpec, ScalarField};
use crate::spectral::ModeSet;
use crate::target::{MapField, Target};

/// Signed torus displacement `x - c` folded into `[-L/2, L/2)`.
fn fold(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

/// `(cos kx, sin kx, 0)` with `k = 2π/Lx`: harmonic, `|du|² = k²`.
pub fn geodesic_map(grid: GridSpec) -> MapField {
    let k = 2.0 * std::f64::consts::PI / grid.lx;
    MapField::new(grid, Target::Sphere { q: 3 }, |x, _, v| v.copy_from_slice(&[(k * x).cos(), (k * x).sin(), 0.0]))
}

/// Smooth map near the north pole: the stereographic lift of
/// `amp · (sin(k x + 0.3), cos(k y) + ½ sin(k(x - y)))`.
pub fn smooth_map(grid: GridSpec, amp: f64) -> MapField {
    let (kx, ky) = (2.0 * std::f64::consts::PI / grid.lx, 2.0 * std::f64::consts::PI / grid.ly);
    MapField::new(grid, Target::Sphere { q: 3 }, |x, y, v| {
        let a = amp * (kx * x + 0.3).sin();
        let b = amp * ((ky * y).cos() + 0.5 * (kx * x - ky * y).sin());
        let n = (a * a + b * b + 1.0).sqrt();
        v.copy_from_slice(&[a / n, b / n, 1.0 / n]);
    })
}

/// Degree-1 map `T² → S²`: an inverse-stereographic bubble of scale `lambda`
/// at `center`, cut off smoothly at radius `rho` (constant north pole outside).
pub fn degree1_bubble(grid: GridSpec, center: (f64, f64), lambda: f64, rho: f64) -> MapField {
    MapField::new(grid, Target::Sphere { q: 3 }, |x, y, v| {
        let (dx, dy) = (fold(x - center.0, grid.lx), fold(y - center.1, grid.ly));
        let r2 = dx * dx + dy * dy;
        let s = r2 / (rho * rho);
        let b = if s < 1.0 { (1.0 - s).powi(2) } else { 0.0 };
        let lb = lambda * b;
        let den = r2 + lb * lb;
        if den == 0.0 {
            v.copy_from_slice(&[0.0, 0.0, -1.0]);
        } else {
            v.copy_from_slice(&[2.0 * lb * dx / den, 2.0 * lb * dy / den, (r2 - lb * lb) / den]);
        }
    })
}

/// Single spinor Fourier mode on the `Dirac` eigenbranch `lambda = ±|ξ|`,
/// vector part `dir`. `xi` must be an allowed frequency of the grid's spin structure.
pub fn spinor_mode(grid: GridSpec, xi: (f64, f64), lambda: f64, amp: f64, dir: &[f64]) -> VectorSpinorField {
    let s = mode_spinor(xi, lambda);
    let q = dir.len();
    VectorSpinorField::from_fn(grid, q, |x, y, v| {
        let e = Complex64::from_polar(amp, xi.0 * x + xi.1 * y);
        for k in 0..q {
            v[k] = s[0] * e * dir[k];
            v[q + k] = s[1] * e * dir[k];
        }
    })
}

/// Constant spinor (only single-valued on the periodic structure).
pub fn constant_spinor(grid: GridSpec, value: [Complex64; 2], dir: &[f64]) -> VectorSpinorField {
    let q = dir.len();
    VectorSpinorField::from_fn(grid, q, |_, _, v| {
        for k in 0..q {
            v[k] = value[0] * dir[k];
            v[q + k] = value[1] * dir[k];
        }
    })
}

fn coefficient(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random spinor with modes `|k_i| ≤ kmax` of the spin lattice, scaled to
/// `max|ψ| = amp`, then projected tangent along `u`.
pub fn random_spinor(u: &MapField, kmax: i64, amp: f64, seed: u64) -> VectorSpinorField {
    let grid = *u.grid();
    let q = u.q();
    let modes = ModeSet::for_grid(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = vec![];
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            let c: Vec<Complex64> = (0..2 * q).map(|_| coefficient(&mut rng)).collect();
            terms.push((modes.xi(k1, k2), c));
        }
    }
    let raw = VectorSpinorField::from_fn(grid, q, |x, y, v| {
        for (xi, c) in &terms {
            let e = Complex64::from_polar(1.0, xi.0 * x + xi.1 * y);
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi += ci * e;
            }
        }
    });
    let psi = tangency_project(&raw, u);
    let m = psi.sup_sq().sqrt();
    if m == 0.0 {
        return psi;
    }
    psi.map_field(|f| f.scaled(amp / m))
}

/// Random real band-limited scalar field, modes `|k_i| ≤ kmax`.
pub fn random_scalar(grid: GridSpec, kmax: i64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 2.0 * std::f64::consts::PI;
    let mut terms = vec![];
    for k1 in -kmax..=kmax {
        for k2 in 0..=kmax {
            terms.push((tau * k1 as f64 / grid.lx, tau * k2 as f64 / grid.ly, coefficient(&mut rng)));
        }
    }
    ScalarField::scalar(grid, |x, y| {
        terms.iter().map(|(a, b, c)| (c * Complex64::from_polar(1.0, a * x + b * y)).re).sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_regularized;
    use crate::flow::FlowState;
    use crate::grid::{make_grid, SpinStructure};
    use std::f64::consts::PI;

    #[test]
    fn bubble_is_on_target_with_degree_one_energy() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 128, 128, SpinStructure::PERIODIC).unwrap();
        let u = degree1_bubble(g, (PI, PI), 0.3, 2.5);
        assert!(u.constraint_residual() < 1e-14);
        let s = FlowState::new(0.0, 1.0, u, VectorSpinorField::zeros(g, 3)).unwrap();
        let e = energy_regularized(&s).unwrap().dirichlet;
        // degree one: Dirichlet energy at least the area 4π
        assert!(e > 4.0 * PI * 0.97 && e < 4.0 * PI * 1.3, "{e}");
    }

    #[test]
    fn seeded_fields_are_reproducible() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16, SpinStructure::new(1, 1).unwrap()).unwrap();
        let u = smooth_map(g, 0.4);
        let a = random_spinor(&u, 2, 0.5, 7);
        assert_eq!(a, random_spinor(&u, 2, 0.5, 7));
        assert_ne!(a, random_spinor(&u, 2, 0.5, 8));
        assert!((a.sup_sq().sqrt() - 0.5).abs() < 1e-12);
        assert!(a.tangency_residual(&u) < 1e-14);
        assert_eq!(random_scalar(g, 3, 1), random_scalar(g, 3, 1));
    }
}
