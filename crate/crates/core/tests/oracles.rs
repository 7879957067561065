//! Numerical results checked against independently computed references:
//! dense linear algebra, a separate Simpson rule, bisection, closed forms and
//! Monte Carlo sampling.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spde_core::boundary_layer::{closed_form, closed_form_error, flux_limit_check, solve_zeta};
use spde_core::diffusion::{DiffusionSpec, Law, Regime, YosidaRegularizer};
use spde_core::experiments::oracle::{decay_factor, mode_moments};
use spde_core::grid::{self, Grid, GridFunction, Norm};
use spde_core::kinetics::{chi, Bins, KineticHistogram};
use spde_core::noise::{NoiseOperator, NoiseSpec};
use spde_core::profiles::Profile;
use spde_core::stepper::{integrate, integrate_coupled, Forcing, Scheme, SolverConfig};
use spde_core::tridiag::Tridiagonal;

fn stencil(n: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 / (h * h),
        1 => -1.0 / (h * h),
        _ => 0.0,
    })
}

fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    let left = (m - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + m)) + f(m));
    let right = (b - m) / 6.0 * (f(m) + 4.0 * f(0.5 * (m + b)) + f(b));
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        simpson(f, a, m, tol / 2.0, depth - 1) + simpson(f, m, b, tol / 2.0, depth - 1)
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(hi) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn eigenvalues_match_dense_eigensolve() {
    for (length, n) in [(1.0, 63), (2.5, 40)] {
        let g = Grid::new(length, n).unwrap();
        let mut dense: Vec<f64> = SymmetricEigen::new(stencil(n, g.spacing())).eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (k, d) in dense.iter().enumerate() {
            assert_relative_eq!(g.eigenvalue(k + 1), *d, max_relative = 1e-10);
        }
    }
}

#[test]
fn eigenvector_is_discrete_eigenfunction_and_alpha1_converges() {
    let mut prev = f64::INFINITY;
    for n in [15, 31, 63, 127, 255] {
        let g = Grid::new(1.0, n).unwrap();
        let e1 = g.eigenvector(1);
        let lap = g.laplacian_apply(&e1).unwrap();
        for (l, e) in lap.values().iter().zip(e1.values()) {
            assert_relative_eq!(*l, -g.eigenvalue(1) * e, epsilon = 1e-9);
        }
        let err = (g.eigenvalue(1) - std::f64::consts::PI.powi(2)).abs();
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 1e-3);
}

#[test]
fn poincare_bound_on_random_fields() {
    let g = Grid::new(1.0, 50).unwrap();
    let h = g.spacing();
    let alpha1 = SymmetricEigen::new(stencil(50, h)).eigenvalues.min();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let f: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hn = grid::h_norm_sq(h, &f).sqrt();
        let h1 = grid::h1_norm_sq(h, &f).sqrt();
        assert!(hn <= h1 / alpha1.sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn thomas_solver_matches_dense_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 40;
    let lower: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..0.0)).collect();
    let upper: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..0.0)).collect();
    let diag: Vec<f64> = (0..n).map(|_| rng.random_range(2.5..4.0)).collect();
    let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; n];
    Tridiagonal::new(n).solve(&lower, &diag, &upper, &rhs, &mut out).unwrap();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i == j + 1 {
            lower[j]
        } else if j == i + 1 {
            upper[i]
        } else {
            0.0
        }
    });
    let x = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
    for (a, b) in out.iter().zip(x.iter()) {
        assert_relative_eq!(*a, *b, epsilon = 1e-12);
    }
}

#[test]
fn primitive_matches_simpson() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for theta in [2.5, 3.0, 4.5] {
        let spec = DiffusionSpec::porous(1.0, theta).unwrap();
        let expr = DiffusionSpec::with_regime(
            Law::expression(&format!("math::abs(r)^{}", theta - 1.0)).unwrap(),
            Regime::Degenerate { theta1: theta, theta2: theta, c1: 1.0, c2: 1.0 },
        )
        .unwrap();
        for _ in 0..20 {
            let r: f64 = rng.random_range(-4.0..4.0);
            let reference = simpson(|s: f64| s.abs().powf(theta - 1.0), 0.0, r, 1e-13, 40);
            assert_relative_eq!(spec.primitive(r).unwrap(), reference, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(expr.primitive(r).unwrap(), reference, max_relative = 1e-9, epsilon = 1e-12);
        }
    }
}

#[test]
fn cubic_resolvent_matches_bisection() {
    let spec = DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap();
    let y = YosidaRegularizer::new(spec, 0.5).unwrap();
    let reference = bisect(|j| j + 0.5 * j.powi(3) / 3.0 - 1.0, 0.0, 1.0);
    let j = y.resolvent(1.0).unwrap();
    assert!((j - reference).abs() < 1e-12);
    assert!(y.residual(j, 1.0).unwrap().abs() < 1e-10);
}

#[test]
fn node_increment_variance_matches_sigma_sq() {
    let g = Grid::new(1.0, 16).unwrap();
    let spec = NoiseSpec::additive(8, 0.7, 1.0, 21);
    let op = NoiseOperator::new(spec, g).unwrap();
    let dt = 1e-2;
    let samples = 100_000;
    let path = op.path(0, dt, samples).unwrap();
    let j = 5;
    let zero = g.zeros();
    let xs: Vec<f64> = (0..samples).map(|s| op.sample_increment(&path, s, &zero).unwrap().values()[j]).collect();
    let mean = xs.iter().sum::<f64>() / samples as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / (samples - 1) as f64;
    let var_se = (sq.iter().map(|s| (s - var).powi(2)).sum::<f64>() / (samples - 1) as f64 / samples as f64).sqrt();
    let exact = op.sigma_sq(g.node(j + 1), 0.0) * dt;
    assert!((var - exact).abs() < 3.0 * var_se, "var {var} exact {exact} se {var_se}");
}

#[test]
fn terminal_mode_variance_matches_continuum_ou_on_fine_grid() {
    // Discrete recursion vs lambda^2 (1 - e^{-2 alpha t}) / (2 alpha) as dt -> 0.
    let g = Grid::new(1.0, 255).unwrap();
    let noise = NoiseSpec::additive(4, 1.0, 1.0, 1);
    let t = 0.05;
    let dt = 1e-6;
    let steps = (t / dt) as usize;
    for k in 1..=3 {
        let (_, var) = mode_moments(&g, 1.0, &noise, dt, steps, k, 0.0);
        let a = noise.amplitude(k);
        let alpha = (k as f64 * std::f64::consts::PI).powi(2);
        let exact = a * a * (1.0 - (-2.0 * alpha * t).exp()) / (2.0 * alpha);
        assert_relative_eq!(var, exact, max_relative = 1e-3);
    }
}

#[test]
fn additive_difference_follows_deterministic_heat_flow() {
    let g = Grid::new(1.0, 48).unwrap();
    let spec = DiffusionSpec::constant(0.8).unwrap();
    let op = NoiseOperator::new(NoiseSpec::additive(48, 2.0, 1.0, 4), g).unwrap();
    let cfg = SolverConfig::new(1e-3, 0.1).with_record_every(100);
    let path = op.path(7, cfg.dt, cfg.steps()).unwrap();
    let u1 = Profile::bump(1.0).sample(&g).unwrap();
    let u2 = Profile::Sine { mode: 2, amplitude: 0.5 }.sample(&g).unwrap();
    let noisy = integrate_coupled(&[u1.clone(), u2.clone()], &cfg, &spec, Forcing::Noise { op: &op, path: &path }).unwrap();
    let d0: Vec<f64> = u1.values().iter().zip(u2.values()).map(|(a, b)| a - b).collect();
    let det = integrate(&GridFunction::new(g, d0).unwrap(), &cfg, &spec, Forcing::None).unwrap();
    for (s, snap) in det.snapshots.iter().enumerate() {
        for j in 0..48 {
            let d = noisy[0].snapshots[s].values()[j] - noisy[1].snapshots[s].values()[j];
            assert!((d - snap.values()[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn first_mode_decays_by_exact_factor() {
    let g = Grid::new(1.0, 64).unwrap();
    let cfg = SolverConfig::new(1e-3, 0.01);
    let spec = DiffusionSpec::constant(1.3).unwrap();
    let e1 = g.eigenvector(1);
    let traj = integrate(&e1, &cfg, &spec, Forcing::None).unwrap();
    let rho = decay_factor(&g, 1.3, cfg.dt, 1);
    assert_relative_eq!(rho, 1.0 / (1.0 + cfg.dt * 1.3 * g.eigenvalue(1)), epsilon = 1e-15);
    let expected = rho.powi(cfg.steps() as i32);
    assert!((g.mode_coefficient(traj.last(), 1) - expected).abs() < 1e-12);
}

#[test]
fn mass_changes_only_through_boundary_flux() {
    let g = Grid::new(1.0, 64).unwrap();
    let h = g.spacing();
    let spec = DiffusionSpec::porous_floor(0.5, 1.0, 3.0).unwrap();
    let cfg = SolverConfig::new(1e-4, 1e-4);
    let u0 = Profile::bump(2.0).sample(&g).unwrap();
    let traj = integrate(&u0, &cfg, &spec, Forcing::None).unwrap();
    let u1 = traj.last().values();
    let u0v = u0.values();
    let n = u0v.len();
    // Faces frozen at the old state with arithmetic means, gradients at the new state.
    let face = |l: f64, r: f64| 0.5 * (spec.b(l) + spec.b(r));
    let flux_left = face(0.0, u0v[0]) * (u1[0] - 0.0) / h;
    let flux_right = face(u0v[n - 1], 0.0) * (0.0 - u1[n - 1]) / h;
    let mass_change = h * (u1.iter().sum::<f64>() - u0v.iter().sum::<f64>());
    assert_relative_eq!(mass_change, cfg.dt * (flux_right - flux_left), max_relative = 1e-10);
    assert!(mass_change <= 0.0);
}

fn explicit_reference(u0: &[f64], h: f64, dt: f64, steps: usize, b: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = u0.len();
    let mut u = u0.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for j in 0..n {
            let l = if j == 0 { 0.0 } else { u[j - 1] };
            let r = if j + 1 == n { 0.0 } else { u[j + 1] };
            let fl = 0.5 * (b(l) + b(u[j])) * (u[j] - l);
            let fr = 0.5 * (b(r) + b(u[j])) * (r - u[j]);
            next[j] = u[j] + dt / (h * h) * (fr - fl);
        }
        std::mem::swap(&mut u, &mut next);
    }
    u
}

#[test]
fn porous_flow_matches_fine_explicit_reference() {
    let t = 0.02;
    let coarse = Grid::new(1.0, 127).unwrap();
    let fine = Grid::new(1.0, 511).unwrap();
    let spec = DiffusionSpec::porous(1.0, 3.0).unwrap();
    let profile = Profile::bump(2.0);
    let u0c = profile.sample(&coarse).unwrap();
    let u0f = profile.sample(&fine).unwrap();
    let cfg = SolverConfig::new(2e-5, t);
    let traj = integrate(&u0c, &cfg, &spec, Forcing::None).unwrap();
    let hf = fine.spacing();
    let dtf = 0.2 * hf * hf / spec.b(2.0);
    let steps = (t / dtf).round() as usize;
    let reference = explicit_reference(u0f.values(), hf, t / steps as f64, steps, |r| spec.b(r));
    // Coarse node j sits at fine node 4j + 3.
    let err: f64 = traj.last().values().iter().enumerate().map(|(j, v)| (v - reference[4 * j + 3]).abs()).sum::<f64>()
        * coarse.spacing();
    assert!(err <= 1e-3, "L1 distance {err}");
    let l1 = |u: &GridFunction| u.norm(Norm::Lp(1.0)).unwrap();
    assert!(l1(traj.last()) <= l1(&u0c));
    assert!(traj.last().norm(Norm::Sup).unwrap() < u0c.norm(Norm::Sup).unwrap());
    let support = |u: &GridFunction| u.values().iter().filter(|v| v.abs() > 1e-6).count();
    assert!(support(traj.last()) > support(&u0c));
}

#[test]
fn explicit_scheme_agrees_with_implicit_at_small_dt() {
    let g = Grid::new(1.0, 31).unwrap();
    let spec = DiffusionSpec::bounded(1.0, 2.0).unwrap();
    let u0 = Profile::bump(1.5).sample(&g).unwrap();
    // Both schemes are first order in time, so their gap halves with dt.
    let gap = |dt: f64| {
        let a = integrate(&u0, &SolverConfig::new(dt, 0.01), &spec, Forcing::None).unwrap();
        let b = integrate(&u0, &SolverConfig::new(dt, 0.01).with_scheme(Scheme::Explicit), &spec, Forcing::None).unwrap();
        grid::l1_distance(g.spacing(), a.last().values(), b.last().values())
    };
    let (d1, d2) = (gap(1e-5), gap(5e-6));
    assert!(d1 < 2e-4, "{d1}");
    let ratio = d1 / d2;
    assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
}

#[test]
fn kinetic_reconstruction_identity() {
    let g = Grid::new(1.0, 20).unwrap();
    let u1 = Profile::bump(1.2).sample(&g).unwrap();
    let u2 = Profile::Sine { mode: 3, amplitude: -0.7 }.sample(&g).unwrap();
    let (lo, hi, m) = (-2.0, 2.0, 40_000);
    let dxi = (hi - lo) / m as f64;
    let mut acc = vec![0.0; 20];
    for k in 0..m {
        let xi = lo + (k as f64 + 0.5) * dxi;
        let (c1, c2) = (chi(&u1, xi), chi(&u2, xi));
        for j in 0..20 {
            acc[j] += f64::from(c1[j] - c2[j]) * dxi;
        }
    }
    for j in 0..20 {
        assert!((acc[j] - (u1.values()[j] - u2.values()[j])).abs() <= dxi);
    }
}

#[test]
fn kinetic_mass_equals_energy_drop_for_constant_b() {
    let g = Grid::new(1.0, 64).unwrap();
    let h = g.spacing();
    let b0 = 0.9;
    let spec = DiffusionSpec::constant(b0).unwrap();
    let cfg = SolverConfig::new(1e-5, 0.02);
    let u0 = Profile::bump(1.0).sample(&g).unwrap();
    let traj = integrate(&u0, &cfg, &spec, Forcing::None).unwrap();
    let mut histo = KineticHistogram::new(Bins::symmetric(2.0, 32).unwrap());
    for s in traj.snapshots.iter().skip(1) {
        histo.deposit_state(s.values(), h, cfg.dt, |r| spec.b(r), 0.0);
    }
    let drop = 0.5 * (grid::h_norm_sq(h, u0.values()) - grid::h_norm_sq(h, traj.last().values()));
    assert_relative_eq!(histo.total(), drop, max_relative = 2e-3);
}

#[test]
fn boundary_layer_matches_closed_form_at_second_order() {
    let mut errs = Vec::new();
    for n in [31, 63, 127] {
        let g = Grid::new(1.0, n).unwrap();
        let layer = solve_zeta(&g, 0.1).unwrap();
        errs.push(closed_form_error(&layer));
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
    assert!(closed_form(0.5, 0.05, 1.0) >= 0.99);
    assert_relative_eq!(closed_form(0.5, 0.05, 1.0), 1.0 - 1.0 / 10f64.cosh(), epsilon = 1e-15);
}

#[test]
fn flux_of_identity_tends_to_minus_one() {
    let g = Grid::new(1.0, 1023).unwrap();
    let r = flux_limit_check(&g, |x| x, &[0.1, 0.05, 0.02, 0.01]).unwrap();
    assert!((r.extrapolated_limit + 1.0).abs() < 0.02);
    // Each value is -int zeta, which is -(1 - 2 delta tanh(1 / (2 delta))) in closed form.
    for (d, v) in r.deltas.iter().zip(&r.values) {
        assert_relative_eq!(*v, -(1.0 - 2.0 * d * (0.5 / d).tanh()), max_relative = 1e-3);
    }
}
