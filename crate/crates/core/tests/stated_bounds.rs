//! Constants and inequalities stated by the underlying theory, checked on
//! samples: Hölder exponents, Yosida bounds, the symbol exponent, the viscous
//! regime shift, boundary decay of the noise and the ergodic scope gate.

use approx::assert_relative_eq;
use spde_core::config::Config;
use spde_core::diffusion::{DiffusionSpec, Regime, SymbolProbe, YosidaRegularizer};
use spde_core::experiments::{contraction, Setup};
use spde_core::grid::Grid;
use spde_core::noise::{NoiseOperator, NoiseSpec, StateProfile};
use spde_core::stepper::SolverConfig;

#[test]
fn holder_exponent_rules_for_porous_b() {
    // gamma = 1 once theta >= 3.
    let s = DiffusionSpec::porous(1.0, 4.0).unwrap();
    assert_eq!(s.holder_gamma(), 1.0);
    assert!(s.validate_hypotheses(3.0, 401).unwrap().holder_ok);
    // gamma in (1/2, (theta - 1)/2) for theta in (2, 3).
    let s = DiffusionSpec::porous(1.0, 2.5).unwrap();
    assert!(s.holder_gamma() > 0.5 && s.holder_gamma() < 0.75);
    assert!(s.validate_hypotheses(3.0, 401).unwrap().holder_ok);
    assert!(s.clone().with_holder_gamma(0.5).is_err());
}

#[test]
fn yosida_coefficient_bounds() {
    for spec in [DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap(), DiffusionSpec::affine_floor(0.5, 2.0).unwrap()] {
        for eps in [1e-3, 0.1, 1.0] {
            let y = YosidaRegularizer::new(spec.clone(), eps).unwrap();
            for k in -400..=400 {
                let r = k as f64 * 0.05;
                let be = y.b_eps(r).unwrap();
                // b0 <= b_eps <= b0 + 2/eps; the construction even stays under b0 + 1/eps.
                assert!(be >= y.b0() - 1e-12 && be <= y.b0() + 2.0 / eps);
                assert!(be <= y.b0() + 1.0 / eps + 1e-9);
                let j = y.resolvent(r).unwrap();
                assert!((j - r).abs() <= eps * y.b_tilde_eps(r).unwrap().abs() + 1e-9);
            }
        }
    }
}

#[test]
fn symbol_measure_exponent_is_one_over_theta_minus_one() {
    for theta in [3.0, 4.0] {
        let s = DiffusionSpec::porous(1.0, theta).unwrap();
        let probe = SymbolProbe::new(&s, (-1.0, 1.0), 100_000).unwrap();
        let deltas: Vec<f64> = (4..12).map(|k| 0.5f64.powi(k)).collect();
        let slope = probe.fitted_exponent(2.0, &deltas).unwrap();
        let expected = 1.0 / (theta - 1.0);
        assert!((slope - expected).abs() <= 0.15 * expected, "theta {theta}: slope {slope}");
    }
}

#[test]
fn viscous_shift_is_non_degenerate_with_floor_tau() {
    let tau = 0.05;
    let s = DiffusionSpec::porous(1.0, 3.0).unwrap().viscous(tau).unwrap();
    match s.regime() {
        Regime::NonDegenerate { b0, .. } => assert_relative_eq!(b0, tau),
        r => panic!("unexpected regime {r:?}"),
    }
    let rep = s.validate_hypotheses(4.0, 801).unwrap();
    assert_eq!(rep.nondegenerate_growth_ok, Some(true));
    assert!(rep.pass());
}

#[test]
fn noise_intensity_vanishes_at_the_boundary() {
    let g = Grid::new(1.0, 64).unwrap();
    let op = NoiseOperator::new(NoiseSpec::multiplicative(32, 1.0, 1.0, StateProfile::Sin, 0), g).unwrap();
    let mid = op.sigma_sq(0.5, 1.0);
    assert!(mid > 0.0);
    for x in [0.0, 1.0] {
        assert!(op.sigma_sq(x, 1.0) < 1e-28);
    }
    assert!(op.sigma_sq(1e-4, 1.0) < 1e-4 * mid);
    let single = NoiseOperator::new(NoiseSpec::additive(1, 1.5, 1.0, 0), g).unwrap();
    // N = 1, s = 1, midpoint: lambda_1^2 * e_1(1/2)^2 = 2 lambda_1^2.
    assert_relative_eq!(single.sigma_sq(0.5, 0.0), 2.0 * 1.5 * 1.5, epsilon = 1e-12);
}

#[test]
fn additive_pathwise_contraction_holds_on_every_path() {
    let g = Grid::new(1.0, 32).unwrap();
    let setup = Setup::new(
        g,
        DiffusionSpec::bounded(1.0, 2.0).unwrap(),
        NoiseSpec::additive(32, 1.0, 1.0, 17),
        SolverConfig::new(1e-3, 0.2).with_record_every(5),
        24,
    );
    let r = contraction::run_contraction(&setup, &contraction::CouplingParams::default()).unwrap();
    assert_eq!(r.criterion("pathwise_non_increasing").unwrap().estimate, 1.0);
    assert!(r.pass);
}

#[test]
fn ergodic_scope_requires_additive_noise() {
    let text = r#"
[grid]
n = 16
[diffusion]
law = "bounded"
b0 = 1.0
b1 = 2.0
[noise]
mode = "multiplicative"
profile = "sin"
[experiment]
kind = "ergodic"
"#;
    let err = Config::parse(text).unwrap_err().to_string();
    assert!(err.contains("additive"), "{err}");
    let ok = text.replace("kind = \"ergodic\"", "kind = \"ergodic\"\n[experiment.params]\nnegative_control = true");
    assert!(Config::parse(&ok).is_ok());
}

#[test]
fn invariant_measure_needs_the_non_degenerate_regime() {
    let text = r#"
[grid]
n = 16
[diffusion]
law = "porous"
c = 1.0
theta = 3.0
[noise]
mode = "additive"
[experiment]
kind = "invariant"
"#;
    let err = Config::parse(text).unwrap_err().to_string();
    assert!(err.contains("non-degenerate"), "{err}");
}
