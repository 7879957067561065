//! The diffusion nonlinearity `b`, its primitive, the Yosida regularization
//! for the non-degenerate regime, the viscous shift for the degenerate one,
//! and sampling validators for the growth and Hölder hypotheses.

use std::sync::Arc;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Growth regime of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `b0 <= b(r) <= c (1 + |r|^(theta-1))`.
    NonDegenerate { b0: f64, theta: f64, c: f64 },
    /// `c1 |r|^(theta1-1) <= b(r) <= c2 (1 + |r|^(theta2-1))`.
    Degenerate { theta1: f64, theta2: f64, c1: f64, c2: f64 },
}

impl Regime {
    pub fn b0(&self) -> Option<f64> {
        match *self {
            Regime::NonDegenerate { b0, .. } => Some(b0),
            Regime::Degenerate { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Regime::Degenerate { .. })
    }

    fn lower(&self, r: f64) -> f64 {
        match *self {
            Regime::NonDegenerate { b0, .. } => b0,
            Regime::Degenerate { theta1, c1, .. } => c1 * r.abs().powf(theta1 - 1.0),
        }
    }

    fn upper(&self, r: f64) -> f64 {
        match *self {
            Regime::NonDegenerate { theta, c, .. } => c * (1.0 + r.abs().powf(theta - 1.0)),
            Regime::Degenerate { theta2, c2, .. } => c2 * (1.0 + r.abs().powf(theta2 - 1.0)),
        }
    }
}

/// Shipped families of `b`, plus custom expressions in the variable `r`.
#[derive(Debug, Clone)]
pub enum Law {
    Constant { b0: f64 },
    AffineFloor { b0: f64, slope: f64 },
    Porous { c: f64, theta: f64 },
    PorousFloor { b0: f64, c: f64, theta: f64 },
    /// `b0 + (b1 - b0) r^2 / (1 + r^2)`, increasing in `|r|` from `b0` to `b1`.
    Bounded { b0: f64, b1: f64 },
    Expr { source: String, node: Arc<Node<DefaultNumericTypes>> },
}

impl PartialEq for Law {
    fn eq(&self, other: &Self) -> bool {
        use Law::*;
        match (self, other) {
            (Constant { b0: a }, Constant { b0: b }) => a == b,
            (AffineFloor { b0: a, slope: s }, AffineFloor { b0: b, slope: t }) => a == b && s == t,
            (Porous { c: a, theta: s }, Porous { c: b, theta: t }) => a == b && s == t,
            (PorousFloor { b0: a, c: c1, theta: s }, PorousFloor { b0: b, c: c2, theta: t }) => {
                a == b && c1 == c2 && s == t
            }
            (Bounded { b0: a, b1: s }, Bounded { b0: b, b1: t }) => a == b && s == t,
            (Expr { source: a, .. }, Expr { source: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl Law {
    pub fn expression(source: &str) -> Result<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Expression(format!("{source}: {e}")))?;
        let law = Law::Expr { source: source.to_string(), node: Arc::new(node) };
        law.try_eval(0.5)?;
        Ok(law)
    }

    fn try_eval(&self, r: f64) -> Result<f64> {
        match self {
            Law::Expr { source, node } => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                ctx.set_value("r".into(), Value::Float(r))
                    .map_err(|e| Error::Expression(e.to_string()))?;
                node.eval_number_with_context(&ctx)
                    .map_err(|e| Error::Expression(format!("{source} at r = {r}: {e}")))
            }
            _ => Ok(self.eval(r)),
        }
    }

    fn eval(&self, r: f64) -> f64 {
        let a = r.abs();
        match *self {
            Law::Constant { b0 } => b0,
            Law::AffineFloor { b0, slope } => b0 + slope * a,
            Law::Porous { c, theta } => c * pow_abs(a, theta - 1.0),
            Law::PorousFloor { b0, c, theta } => b0 + c * pow_abs(a, theta - 1.0),
            Law::Bounded { b0, b1 } => b0 + (b1 - b0) * r * r / (1.0 + r * r),
            Law::Expr { .. } => self.try_eval(r).unwrap_or(f64::NAN),
        }
    }

    fn closed_primitive(&self, r: f64) -> Option<f64> {
        let a = r.abs();
        let s = r.signum();
        Some(match *self {
            Law::Constant { b0 } => b0 * r,
            Law::AffineFloor { b0, slope } => b0 * r + slope * s * a * a / 2.0,
            Law::Porous { c, theta } => c * s * a.powf(theta) / theta,
            Law::PorousFloor { b0, c, theta } => b0 * r + c * s * a.powf(theta) / theta,
            Law::Bounded { b0, b1 } => b0 * r + (b1 - b0) * (r - r.atan()),
            Law::Expr { .. } => return None,
        })
    }

    /// Regime implied by the parameters of a shipped family.
    pub fn natural_regime(&self) -> Option<Regime> {
        Some(match *self {
            Law::Constant { b0 } => Regime::NonDegenerate { b0, theta: 1.0, c: b0 },
            Law::AffineFloor { b0, slope } => Regime::NonDegenerate { b0, theta: 2.0, c: b0.max(slope) },
            Law::Porous { c, theta } => Regime::Degenerate { theta1: theta, theta2: theta, c1: c, c2: c },
            Law::PorousFloor { b0, c, theta } => Regime::NonDegenerate { b0, theta, c: b0.max(c) },
            Law::Bounded { b0, b1 } => Regime::NonDegenerate { b0, theta: 1.0, c: b0.max(b1) },
            Law::Expr { .. } => return None,
        })
    }

    /// Largest exponent for which `sqrt(b)` is locally Hölder.
    fn natural_gamma(&self) -> f64 {
        match *self {
            Law::Porous { theta, .. } => default_porous_gamma(theta),
            Law::PorousFloor { theta, .. } if theta < 2.0 => (theta - 1.0).max(0.5),
            _ => 1.0,
        }
    }

    fn check_params(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            Law::Constant { b0 } if !(b0 > 0.0) => bad(format!("constant b0 must be positive, got {b0}")),
            Law::AffineFloor { b0, slope } if !(b0 > 0.0 && slope >= 0.0) => {
                bad(format!("affine_floor needs b0 > 0 and slope >= 0, got ({b0}, {slope})"))
            }
            Law::Porous { c, theta } if !(c > 0.0 && theta > 1.0) => {
                bad(format!("porous needs c > 0 and theta > 1, got ({c}, {theta})"))
            }
            Law::PorousFloor { b0, c, theta } if !(b0 > 0.0 && c >= 0.0 && theta >= 1.0) => {
                bad(format!("porous_floor needs b0 > 0, c >= 0, theta >= 1, got ({b0}, {c}, {theta})"))
            }
            Law::Bounded { b0, b1 } if !(b0 > 0.0 && b1 >= b0) => {
                bad(format!("bounded needs 0 < b0 <= b1, got ({b0}, {b1})"))
            }
            _ => Ok(()),
        }
    }
}

/// `a^e` for `a >= 0`, skipping `powf` for the common exponents.
#[inline]
fn pow_abs(a: f64, e: f64) -> f64 {
    if e == 2.0 {
        a * a
    } else if e == 1.0 {
        a
    } else if e == 1.5 {
        a * a.sqrt()
    } else if e == 3.0 {
        a * a * a
    } else {
        a.powf(e)
    }
}

/// Hölder exponent for `c|r|^(theta-1)`: 1 from theta = 3 on, otherwise the
/// midpoint of `(1/2, (theta-1)/2)`.
pub fn default_porous_gamma(theta: f64) -> f64 {
    if theta >= 3.0 {
        1.0
    } else {
        0.5 * (0.5 + 0.5 * (theta - 1.0))
    }
}

/// The diffusion function with its regime parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    law: Law,
    regime: Regime,
    holder_gamma: f64,
    shift: f64,
    bypassed: bool,
}

impl DiffusionSpec {
    /// Builds a spec whose regime follows from the parameters.
    pub fn new(law: Law) -> Result<Self> {
        let regime = law.natural_regime().ok_or_else(|| {
            Error::InvalidArgument("expression diffusion needs an explicit regime".into())
        })?;
        Self::with_regime(law, regime)
    }

    pub fn with_regime(law: Law, regime: Regime) -> Result<Self> {
        law.check_params()?;
        check_regime(&regime)?;
        let holder_gamma = law.natural_gamma();
        Ok(Self { law, regime, holder_gamma, shift: 0.0, bypassed: false })
    }

    /// Skips parameter validation so that negative controls such as an
    /// anti-diffusive `b` can be constructed.
    pub fn bypass_validation(law: Law, regime: Regime) -> Self {
        Self { law, regime, holder_gamma: 1.0, shift: 0.0, bypassed: true }
    }

    pub fn constant(b0: f64) -> Result<Self> {
        Self::new(Law::Constant { b0 })
    }

    pub fn affine_floor(b0: f64, slope: f64) -> Result<Self> {
        Self::new(Law::AffineFloor { b0, slope })
    }

    pub fn porous(c: f64, theta: f64) -> Result<Self> {
        Self::new(Law::Porous { c, theta })
    }

    pub fn porous_floor(b0: f64, c: f64, theta: f64) -> Result<Self> {
        Self::new(Law::PorousFloor { b0, c, theta })
    }

    pub fn bounded(b0: f64, b1: f64) -> Result<Self> {
        Self::new(Law::Bounded { b0, b1 })
    }

    pub fn with_holder_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("Hölder exponent must lie in (1/2, 1], got {gamma}")));
        }
        self.holder_gamma = gamma;
        Ok(self)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn holder_gamma(&self) -> f64 {
        self.holder_gamma
    }

    pub fn is_bypassed(&self) -> bool {
        self.bypassed
    }

    /// `b0` of the non-degenerate regime.
    pub fn b0(&self) -> Option<f64> {
        self.regime.b0()
    }

    pub fn b(&self, r: f64) -> f64 {
        self.law.eval(r) + self.shift
    }

    /// `int_0^r b`, in closed form for the shipped families.
    pub fn primitive(&self, r: f64) -> Result<f64> {
        let base = match self.law.closed_primitive(r) {
            Some(v) => v,
            None => quadrature::integrate(|s| self.law.eval(s), 0.0, r, 1e-12)?,
        };
        Ok(base + self.shift * r)
    }

    /// `b + tau`, which lies in the non-degenerate regime with `b0 = tau`
    /// (plus the parent floor when there is one).
    pub fn viscous(&self, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {tau}")));
        }
        let regime = match self.regime {
            Regime::NonDegenerate { b0, theta, c } => Regime::NonDegenerate { b0: b0 + tau, theta, c: c + tau },
            Regime::Degenerate { theta2, c2, .. } => Regime::NonDegenerate { b0: tau, theta: theta2, c: c2 + tau },
        };
        Ok(Self { regime, shift: self.shift + tau, holder_gamma: 1.0, ..self.clone() })
    }

    /// Largest sampled `b` on `[-range, range]`.
    pub fn sup_on(&self, range: f64) -> f64 {
        let n = 2000;
        (0..=n)
            .map(|i| self.b(-range + 2.0 * range * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks growth bounds, positivity and the Hölder continuity of `sqrt(b)` on `[-range, range]`.
    pub fn validate_hypotheses(&self, range: f64, samples: usize) -> Result<HypothesisReport> {
        if !(range > 0.0) || samples < 2 {
            return Err(Error::InvalidArgument("validation needs range > 0 and at least 2 samples".into()));
        }
        let mut violations = Vec::new();
        let mut violation_count = 0usize;
        let mut positive = true;
        for i in 0..samples {
            let r = -range + 2.0 * range * i as f64 / (samples - 1) as f64;
            let b = self.b(r);
            let (lo, hi) = (self.regime.lower(r), self.regime.upper(r));
            let slack = 1e-12 * hi.abs().max(1.0);
            let ok_pos = match self.regime {
                Regime::NonDegenerate { .. } => b > 0.0,
                Regime::Degenerate { .. } => b > 0.0 || (r == 0.0 && b == 0.0),
            };
            positive &= ok_pos && b.is_finite();
            if !(b >= lo - slack && b <= hi + slack) {
                violation_count += 1;
                if violations.len() < 16 {
                    violations.push(GrowthViolation { r, b, lower: lo, upper: hi });
                }
            }
        }
        let holder = self.holder_check(range, samples.min(4001))?;
        let params_ok = match self.regime {
            Regime::NonDegenerate { b0, theta, c } => b0 > 0.0 && theta >= 1.0 && c > 0.0,
            Regime::Degenerate { theta1, theta2, c1, c2 } => theta2 >= theta1 && theta1 > 2.0 && c1 > 0.0 && c2 > 0.0,
        };
        let growth_ok = violation_count == 0 && positive && params_ok;
        let (h3a, h3b) = match self.regime {
            Regime::NonDegenerate { .. } => (Some(growth_ok), None),
            Regime::Degenerate { .. } => (None, Some(growth_ok)),
        };
        Ok(HypothesisReport {
            range,
            samples,
            positive,
            growth_violation_count: violation_count,
            growth_violations: violations,
            holder,
            holder_ok: holder.pass,
            nondegenerate_growth_ok: h3a,
            degenerate_growth_ok: h3b,
        })
    }

    /// Empirical Hölder constant of `sqrt(b)` from dyadic offsets, at a
    /// coarse (down to 2^-14 range) and a fine (down to 2^-28 range) scale.
    fn holder_check(&self, range: f64, base_points: usize) -> Result<HolderReport> {
        let gamma = self.holder_gamma;
        let sqrt_b = |r: f64| self.b(r).max(0.0).sqrt();
        let constant = |levels: u32| {
            let mut best = 0.0_f64;
            for i in 0..base_points {
                let r = -range + 2.0 * range * i as f64 / (base_points - 1).max(1) as f64;
                let s = sqrt_b(r);
                for k in 1..=levels {
                    let d = 2.0 * range * 0.5f64.powi(k as i32);
                    for r2 in [r + d, r - d] {
                        if r2.abs() <= range {
                            let q = (sqrt_b(r2) - s).abs() / d.powf(gamma);
                            best = best.max(q);
                        }
                    }
                }
            }
            best
        };
        let coarse = constant(14);
        let fine = constant(28);
        if !coarse.is_finite() || !fine.is_finite() {
            return Err(Error::NonFinite(0));
        }
        let pass = fine <= 1.05 * coarse + 1e-12;
        Ok(HolderReport { gamma, constant_coarse: coarse, constant_fine: fine, pass })
    }
}

fn check_regime(regime: &Regime) -> Result<()> {
    match *regime {
        Regime::NonDegenerate { b0, theta, c } if !(b0 > 0.0 && theta >= 1.0 && c > 0.0) => Err(
            Error::InvalidArgument(format!("non-degenerate regime needs b0 > 0, theta >= 1, c > 0; got ({b0}, {theta}, {c})")),
        ),
        Regime::Degenerate { theta1, theta2, c1, c2 } if !(theta2 >= theta1 && theta1 > 2.0 && c1 > 0.0 && c2 > 0.0) => {
            Err(Error::InvalidArgument(format!(
                "degenerate regime needs theta2 >= theta1 > 2 and c1, c2 > 0; got ({theta1}, {theta2}, {c1}, {c2})"
            )))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthViolation {
    pub r: f64,
    pub b: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub gamma: f64,
    pub constant_coarse: f64,
    pub constant_fine: f64,
    pub pass: bool,
}

/// Sampling-based check on `[-range, range]`; never a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub range: f64,
    pub samples: usize,
    pub positive: bool,
    pub growth_violation_count: usize,
    pub growth_violations: Vec<GrowthViolation>,
    pub holder: HolderReport,
    pub holder_ok: bool,
    pub nondegenerate_growth_ok: Option<bool>,
    pub degenerate_growth_ok: Option<bool>,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.holder_ok && self.nondegenerate_growth_ok.unwrap_or(true) && self.degenerate_growth_ok.unwrap_or(true)
    }
}

/// Yosida regularization of `b~(r) = B(r) - b0 r` with resolvent `J = (I + eps b~)^-1`.
#[derive(Debug, Clone)]
pub struct YosidaRegularizer {
    spec: DiffusionSpec,
    epsilon: f64,
    b0: f64,
    tolerance: f64,
}

impl YosidaRegularizer {
    pub fn new(spec: DiffusionSpec, epsilon: f64) -> Result<Self> {
        let b0 = spec.b0().ok_or_else(|| {
            Error::Precondition("Yosida regularization needs a non-degenerate diffusion".into())
        })?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { spec, epsilon, b0, tolerance: 1e-10 })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// `b~(r) = B(r) - b0 r`.
    pub fn b_tilde(&self, r: f64) -> Result<f64> {
        Ok(self.spec.primitive(r)? - self.b0 * r)
    }

    /// `J + eps b~(J) - r`.
    pub fn residual(&self, j: f64, r: f64) -> Result<f64> {
        Ok(j + self.epsilon * self.b_tilde(j)? - r)
    }

    /// The unique `J` with `J + eps b~(J) = r`.
    ///
    /// `J` lies between 0 and `r` because `b~` is nondecreasing with `b~(0) = 0`,
    /// so the bracket is known up front; Newton steps are kept inside it.
    pub fn resolvent(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let eps = self.epsilon;
        let (mut lo, mut hi) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
        let g_lo = self.residual(lo, r)?;
        let g_hi = self.residual(hi, r)?;
        if g_lo > 0.0 || g_hi < 0.0 {
            return Err(Error::BracketFailed(r));
        }
        if g_lo == 0.0 {
            return Ok(lo);
        }
        if g_hi == 0.0 {
            return Ok(hi);
        }
        let mut x = {
            let db = self.spec.b(r) - self.b0;
            (r - eps * self.b_tilde(r)?) / 1.0_f64.max(1.0 + eps * db)
        };
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let g = self.residual(x, r)?;
            if g == 0.0 {
                return Ok(x);
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let dg = 1.0 + eps * (self.spec.b(x) - self.b0);
            let mut next = x - g / dg;
            if !(next > lo && next < hi) || !dg.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
                x = next;
                break;
            }
            x = next;
        }
        let res = self.residual(x, r)?;
        if res.abs() > self.tolerance * r.abs().max(1.0) {
            return Err(Error::BracketFailed(r));
        }
        Ok(x)
    }

    /// `b~_eps(r) = b~(J(r))`, which equals `(r - J(r))/eps` up to the resolvent residual.
    pub fn b_tilde_eps(&self, r: f64) -> Result<f64> {
        self.b_tilde(self.resolvent(r)?)
    }

    /// `B_eps(r) = b0 r + b~_eps(r)`.
    pub fn primitive_eps(&self, r: f64) -> Result<f64> {
        Ok(self.b0 * r + self.b_tilde_eps(r)?)
    }

    /// `b_eps(r) = b0 + (b(J) - b0) / (1 + eps (b(J) - b0))`.
    pub fn b_eps(&self, r: f64) -> Result<f64> {
        let j = self.resolvent(r)?;
        Ok(self.b_eps_from_resolvent(j))
    }

    fn b_eps_from_resolvent(&self, j: f64) -> f64 {
        let d = self.spec.b(j) - self.b0;
        self.b0 + d / (1.0 + self.epsilon * d)
    }

    /// Tabulates `b_eps` on `[-range, range]` for linear interpolation.
    pub fn table(&self, range: f64, points: usize) -> Result<YosidaTable> {
        if !(range > 0.0) || points < 2 {
            return Err(Error::InvalidArgument("table needs range > 0 and at least 2 points".into()));
        }
        let step = 2.0 * range / (points - 1) as f64;
        let values = (0..points)
            .map(|i| self.b_eps(-range + step * i as f64))
            .collect::<Result<Vec<_>>>()?;
        let mut max_error = 0.0_f64;
        for i in 0..points - 1 {
            let r = -range + step * (i as f64 + 0.5);
            let exact = self.b_eps(r)?;
            max_error = max_error.max((0.5 * (values[i] + values[i + 1]) - exact).abs());
        }
        Ok(YosidaTable { range, step, values, max_error, exact: self.clone() })
    }
}

/// Interpolation cache for `b_eps`; falls back to the exact solve outside its range.
#[derive(Debug, Clone)]
pub struct YosidaTable {
    range: f64,
    step: f64,
    values: Vec<f64>,
    max_error: f64,
    exact: YosidaRegularizer,
}

impl YosidaTable {
    /// Largest interpolation error observed at the cell midpoints.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    pub fn b_eps(&self, r: f64) -> Result<f64> {
        if r.abs() >= self.range {
            return self.exact.b_eps(r);
        }
        let s = (r + self.range) / self.step;
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - i as f64;
        Ok((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }
}

/// Estimate of the measure of `{xi in support : |i u + b(xi) n^2| <= delta}`,
/// maximized over `u` and over `|n|` comparable to `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolEstimate {
    pub omega: f64,
    pub reference_rate: f64,
    pub support_length: f64,
    pub saturated: bool,
}

/// Symbol-measure estimator with the sorted `b` samples cached.
#[derive(Debug, Clone)]
pub struct SymbolProbe {
    sorted_b: Vec<f64>,
    cell: f64,
    support_length: f64,
    theta1: f64,
}

impl SymbolProbe {
    pub fn new(spec: &DiffusionSpec, support: (f64, f64), xi_points: usize) -> Result<Self> {
        let theta1 = match spec.regime() {
            Regime::Degenerate { theta1, .. } => theta1,
            Regime::NonDegenerate { .. } => {
                return Err(Error::Precondition("symbol nondegeneracy applies to degenerate diffusions".into()))
            }
        };
        let (a, b) = support;
        if !(b > a) || xi_points == 0 {
            return Err(Error::InvalidArgument("symbol probe needs a nonempty support and ξ grid".into()));
        }
        let cell = (b - a) / xi_points as f64;
        let mut sorted_b: Vec<f64> = (0..xi_points).map(|i| spec.b(a + (i as f64 + 0.5) * cell)).collect();
        sorted_b.sort_by(f64::total_cmp);
        Ok(Self { sorted_b, cell, support_length: b - a, theta1 })
    }

    /// Measure of `{b(xi) n^2 <= sqrt(delta^2 - u^2)}`.
    fn measure(&self, n: f64, u: f64, delta: f64) -> f64 {
        if u.abs() > delta {
            return 0.0;
        }
        let bound = (delta * delta - u * u).sqrt() / (n * n);
        self.sorted_b.partition_point(|&b| b <= bound) as f64 * self.cell
    }

    pub fn estimate(&self, j: f64, delta: f64) -> Result<SymbolEstimate> {
        if !(j >= 1.0 && delta > 0.0) {
            return Err(Error::InvalidArgument(format!("need J >= 1 and delta > 0, got ({j}, {delta})")));
        }
        let max_b = *self.sorted_b.last().unwrap_or(&0.0);
        let u_max = (10.0 * max_b * j * j).min(delta);
        let mut omega = 0.0_f64;
        let n_lo = j.ceil().max(1.0) as u64;
        let n_hi = (2.0 * j).floor() as u64;
        for n in n_lo..=n_hi.max(n_lo) {
            for k in 0..=64 {
                let u = u_max * k as f64 / 64.0;
                omega = omega.max(self.measure(n as f64, u, delta));
            }
        }
        let reference_rate = (delta / (j * j)).powf(1.0 / (self.theta1 - 1.0));
        let saturated = delta >= max_b * (n_lo as f64).powi(2);
        Ok(SymbolEstimate { omega, reference_rate, support_length: self.support_length, saturated })
    }

    /// Log-log slope of the estimate against `delta`.
    pub fn fitted_exponent(&self, j: f64, deltas: &[f64]) -> Result<f64> {
        let mut xs = Vec::with_capacity(deltas.len());
        let mut ys = Vec::with_capacity(deltas.len());
        for &d in deltas {
            let e = self.estimate(j, d)?;
            if e.omega > 0.0 && !e.saturated {
                xs.push(d.ln());
                ys.push(e.omega.ln());
            }
        }
        if xs.len() < 2 {
            return Err(Error::Empty("fewer than two unsaturated symbol estimates".into()));
        }
        Ok(crate::stats::linear_fit(&xs, &ys)?.slope)
    }
}

/// Convenience wrapper building a [`SymbolProbe`] for a single estimate.
pub fn symbol_nondegeneracy(
    spec: &DiffusionSpec,
    support: (f64, f64),
    j: f64,
    delta: f64,
) -> Result<SymbolEstimate> {
    SymbolProbe::new(spec, support, 100_000)?.estimate(j, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn primitive_examples() {
        let s = DiffusionSpec::constant(0.7).unwrap();
        assert_relative_eq!(s.primitive(2.0).unwrap(), 1.4, epsilon = 1e-15);
        let s = DiffusionSpec::porous(1.0, 3.0).unwrap();
        assert_relative_eq!(s.primitive(3.0).unwrap(), 9.0, epsilon = 1e-12);
        assert_eq!(s.primitive(0.0).unwrap(), 0.0);
    }

    #[test]
    fn expression_matches_closed_form() {
        let law = Law::expression("1 + r * r").unwrap();
        let regime = Regime::NonDegenerate { b0: 1.0, theta: 3.0, c: 1.0 };
        let e = DiffusionSpec::with_regime(law, regime).unwrap();
        let c = DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap();
        for r in [-2.5, -0.3, 0.0, 0.8, 3.0] {
            assert_relative_eq!(e.b(r), c.b(r), epsilon = 1e-14);
            assert_relative_eq!(e.primitive(r).unwrap(), c.primitive(r).unwrap(), epsilon = 1e-10);
        }
        assert!(Law::expression("1 + ").is_err());
        assert!(Law::expression("true").is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DiffusionSpec::constant(0.0).is_err());
        assert!(DiffusionSpec::bounded(2.0, 1.0).is_err());
        assert!(DiffusionSpec::porous(1.0, 1.0).is_err());
        assert!(DiffusionSpec::new(Law::expression("r").unwrap()).is_err());
        let neg = DiffusionSpec::bypass_validation(
            Law::Constant { b0: -0.5 },
            Regime::NonDegenerate { b0: 1.0, theta: 1.0, c: 1.0 },
        );
        assert!(neg.is_bypassed());
        assert!(!neg.validate_hypotheses(1.0, 101).unwrap().pass());
    }

    #[test]
    fn identity_resolvent_for_constant_b() {
        let y = YosidaRegularizer::new(DiffusionSpec::constant(2.0).unwrap(), 0.3).unwrap();
        for r in [-5.0, -1e-3, 0.0, 0.25, 7.0] {
            assert_eq!(y.resolvent(r).unwrap(), r);
            assert_eq!(y.b_eps(r).unwrap(), 2.0);
        }
    }

    #[test]
    fn resolvent_cubic_example() {
        let y = YosidaRegularizer::new(DiffusionSpec::porous_floor(1.0, 1.0, 3.0).unwrap(), 0.5).unwrap();
        let j = y.resolvent(1.0).unwrap();
        assert!((j + 0.5 * j.powi(3) / 3.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn yosida_requires_floor() {
        assert!(YosidaRegularizer::new(DiffusionSpec::porous(1.0, 3.0).unwrap(), 0.1).is_err());
    }

    #[test]
    fn viscous_shift() {
        let s = DiffusionSpec::porous(1.0, 3.0).unwrap();
        let v = s.viscous(0.1).unwrap();
        assert_relative_eq!(v.b(0.0), 0.1);
        assert_relative_eq!(v.primitive(2.0).unwrap(), 8.0 / 3.0 + 0.2, epsilon = 1e-12);
        assert_eq!(v.b0(), Some(0.1));
        assert!(v.validate_hypotheses(4.0, 401).unwrap().nondegenerate_growth_ok == Some(true));
        assert!(s.viscous(0.0).is_err());
    }

    #[test]
    fn holder_exponents() {
        let s = DiffusionSpec::porous(1.0, 4.0).unwrap();
        assert_eq!(s.holder_gamma(), 1.0);
        assert!(s.validate_hypotheses(2.0, 201).unwrap().holder_ok);

        let s = DiffusionSpec::porous(1.0, 2.5).unwrap();
        let g = s.holder_gamma();
        assert!(g > 0.5 && g < 0.75);
        let rep = s.validate_hypotheses(2.0, 201).unwrap();
        assert!(rep.holder_ok && rep.degenerate_growth_ok == Some(true));
        let rep = s.with_holder_gamma(1.0).unwrap().validate_hypotheses(2.0, 201).unwrap();
        assert!(!rep.holder_ok);

        let rep = DiffusionSpec::constant(1.0).unwrap().validate_hypotheses(5.0, 101).unwrap();
        assert!(rep.pass() && rep.nondegenerate_growth_ok == Some(true));
    }

    #[test]
    fn symbol_saturation_and_shrinking() {
        let s = DiffusionSpec::porous(1.0, 3.0).unwrap();
        let probe = SymbolProbe::new(&s, (-1.0, 1.0), 20_000).unwrap();
        let e = probe.estimate(1.0, 5.0).unwrap();
        assert!(e.saturated);
        assert_relative_eq!(e.omega, 2.0, epsilon = 1e-12);
        let a = probe.estimate(2.0, 0.05).unwrap().omega;
        let b = probe.estimate(4.0, 0.05).unwrap().omega;
        assert!(b < a);
        assert!(SymbolProbe::new(&DiffusionSpec::constant(1.0).unwrap(), (-1.0, 1.0), 10).is_err());
    }
}
