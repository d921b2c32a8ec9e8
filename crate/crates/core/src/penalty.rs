//! Folded concave penalties and their convex-concave decomposition.
//!
//! Each penalty is split as `p_λ(t) = J_λ(t) + λt` for `t ≥ 0`, with `J_λ`
//! concave and differentiable. CCCP linearizes `J_λ` at the current iterate
//! and keeps the `λ|β|` part exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Scad,
    Mcp,
    L1,
}

impl std::fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
            PenaltyFamily::L1 => "l1",
        })
    }
}

impl std::str::FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            "l1" | "lasso" => Ok(PenaltyFamily::L1),
            other => Err(Error::InvalidPenalty(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    family: PenaltyFamily,
    a: f64,
}

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MCP_A: f64 = 3.0;

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, a: f64) -> Result<Self> {
        match family {
            PenaltyFamily::Scad if !(a > 2.0) => {
                Err(Error::InvalidPenalty(format!("SCAD needs a > 2, got {a}")))
            }
            PenaltyFamily::Mcp if !(a > 1.0) => {
                Err(Error::InvalidPenalty(format!("MCP needs a > 1, got {a}")))
            }
            _ => Ok(PenaltySpec { family, a }),
        }
    }

    pub fn scad(a: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, a)
    }

    pub fn mcp(a: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Mcp, a)
    }

    pub fn l1() -> Self {
        PenaltySpec {
            family: PenaltyFamily::L1,
            a: f64::INFINITY,
        }
    }

    /// Family with its conventional shape parameter.
    pub fn with_default_a(family: PenaltyFamily) -> Self {
        match family {
            PenaltyFamily::Scad => PenaltySpec { family, a: DEFAULT_SCAD_A },
            PenaltyFamily::Mcp => PenaltySpec { family, a: DEFAULT_MCP_A },
            PenaltyFamily::L1 => Self::l1(),
        }
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `ṗ_λ(t)` for `t ≥ 0`.
    pub fn deriv(&self, t: f64, lambda: f64) -> f64 {
        debug_assert!(t >= 0.0 && lambda > 0.0);
        let a = self.a;
        match self.family {
            PenaltyFamily::L1 => lambda,
            PenaltyFamily::Scad => {
                if t <= lambda {
                    lambda
                } else {
                    (a * lambda - t).max(0.0) / (a - 1.0)
                }
            }
            PenaltyFamily::Mcp => (a * lambda - t).max(0.0) / a,
        }
    }

    /// `p_λ(t)`, the antiderivative of [`deriv`](Self::deriv) with `p_λ(0) = 0`.
    pub fn value(&self, t: f64, lambda: f64) -> f64 {
        debug_assert!(t >= 0.0 && lambda > 0.0);
        let a = self.a;
        match self.family {
            PenaltyFamily::L1 => lambda * t,
            PenaltyFamily::Scad => {
                if t <= lambda {
                    lambda * t
                } else if t <= a * lambda {
                    (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lambda * lambda / 2.0
                }
            }
            PenaltyFamily::Mcp => {
                if t <= a * lambda {
                    lambda * t - t * t / (2.0 * a)
                } else {
                    a * lambda * lambda / 2.0
                }
            }
        }
    }

    /// Concave part `J_λ(t) = p_λ(t) − λt`.
    pub fn concave_part(&self, t: f64, lambda: f64) -> f64 {
        self.value(t, lambda) - lambda * t
    }

    /// Signed derivative of `β ↦ J_λ(|β|)`, zero at the origin.
    pub fn concave_grad(&self, beta: f64, lambda: f64) -> f64 {
        if beta == 0.0 || self.family == PenaltyFamily::L1 {
            return 0.0;
        }
        beta.signum() * (self.deriv(beta.abs(), lambda) - lambda)
    }

    /// `Σ_j p_λ(|β_j|)`.
    pub fn total(&self, beta: &[f64], lambda: f64) -> f64 {
        beta.iter().map(|b| self.value(b.abs(), lambda)).sum()
    }
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self::with_default_a(PenaltyFamily::Scad)
    }
}

/// `sign(z) · max(|z| − λ, 0)`.
#[inline]
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scad() -> PenaltySpec {
        PenaltySpec::scad(3.7).unwrap()
    }

    #[test]
    fn construction_checks_shape() {
        assert!(PenaltySpec::scad(2.0).is_err());
        assert!(PenaltySpec::mcp(1.0).is_err());
        assert!(PenaltySpec::mcp(f64::NAN).is_err());
        assert!(PenaltySpec::mcp(1.5).is_ok());
        assert_eq!("MCP".parse::<PenaltyFamily>().unwrap(), PenaltyFamily::Mcp);
        assert!("bridge".parse::<PenaltyFamily>().is_err());
    }

    #[test]
    fn scad_derivative_branches() {
        assert_eq!(scad().deriv(0.5, 1.0), 1.0);
        assert!((scad().deriv(2.0, 1.0) - 1.7 / 2.7).abs() < 1e-15);
        assert_eq!(scad().deriv(1.0, 1.0), 1.0);
        assert_eq!(scad().deriv(3.7, 1.0), 0.0);
        assert_eq!(scad().deriv(10.0, 1.0), 0.0);
    }

    #[test]
    fn mcp_derivative_and_l1() {
        let mcp = PenaltySpec::mcp(3.0).unwrap();
        assert_eq!(mcp.deriv(4.0, 1.0), 0.0);
        assert_eq!(mcp.deriv(0.0, 1.0), 1.0);
        assert!((mcp.deriv(1.5, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(PenaltySpec::l1().deriv(7.0, 0.3), 0.3);
    }

    #[test]
    fn penalty_values() {
        for spec in [scad(), PenaltySpec::mcp(3.0).unwrap(), PenaltySpec::l1()] {
            assert_eq!(spec.value(0.0, 1.0), 0.0);
        }
        assert!((scad().value(3.7, 1.0) - 2.35).abs() < 1e-14);
        assert!((scad().value(9.0, 1.0) - 2.35).abs() < 1e-14);
        let mcp = PenaltySpec::mcp(3.0).unwrap();
        assert!((mcp.value(1.5, 1.0) - 1.125).abs() < 1e-14);
    }

    #[test]
    fn concave_grad_examples() {
        assert_eq!(scad().concave_grad(0.5, 1.0), 0.0);
        assert_eq!(scad().concave_grad(4.0, 1.0), -1.0);
        assert_eq!(scad().concave_grad(-4.0, 1.0), 1.0);
        for spec in [scad(), PenaltySpec::mcp(3.0).unwrap(), PenaltySpec::l1()] {
            assert_eq!(spec.concave_grad(0.0, 0.7), 0.0);
        }
        assert_eq!(PenaltySpec::l1().concave_grad(5.0, 1.0), 0.0);
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 0.0), -2.5);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
    }

    #[test]
    fn soft_threshold_minimizes_scalar_problem() {
        let cases = [(3.0, 1.0), (-0.5, 1.0), (0.3, 0.0), (-4.2, 0.7), (1.0, 1.0)];
        for (z, lam) in cases {
            let obj = |b: f64| 0.5 * b * b - z * b + lam * b.abs();
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=200_000 {
                let b = -10.0 + 1e-4 * k as f64;
                let v = obj(b);
                if v < best.0 {
                    best = (v, b);
                }
            }
            assert!((best.1 - soft_threshold(z, lam)).abs() <= 1e-3, "z={z} lam={lam}");
        }
    }

    #[test]
    fn derivative_continuous_across_knots() {
        for spec in [scad(), PenaltySpec::mcp(3.0).unwrap()] {
            let lam = 0.8;
            let h = 1e-9;
            for knot in [lam, spec.a() * lam] {
                let left = spec.deriv(knot - h, lam);
                let right = spec.deriv(knot + h, lam);
                assert!((left - right).abs() <= 1e-8, "{spec:?} at {knot}");
            }
            // fine grid sweep
            let mut prev = spec.deriv(0.0, lam);
            let mut t = 0.0;
            while t < 5.0 {
                t += 1e-6;
                let cur = spec.deriv(t, lam);
                assert!((cur - prev).abs() <= 1e-5 && cur <= prev + 1e-15);
                prev = cur;
            }
        }
    }

    #[test]
    fn scad_concave_part_matches_closed_form() {
        // Closed form of J for SCAD, branch by branch.
        let (a, lam) = (3.7, 1.3);
        let closed = |t: f64| {
            if t < lam {
                0.0
            } else if t <= a * lam {
                -(t * t - 2.0 * lam * t + lam * lam) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * lam * lam / 2.0 - lam * t
            }
        };
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            assert!((scad().concave_part(t, lam) - closed(t)).abs() < 1e-12);
        }
        // MCP: the quadratic branch is -t²/(2a).
        let mcp = PenaltySpec::mcp(3.0).unwrap();
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            let expected = if t < 3.0 * lam {
                -t * t / 6.0
            } else {
                3.0 * lam * lam / 2.0 - lam * t
            };
            assert!((mcp.concave_part(t, lam) - expected).abs() < 1e-12);
        }
    }

    fn any_spec() -> impl Strategy<Value = PenaltySpec> {
        prop_oneof![
            (2.01f64..10.0).prop_map(|a| PenaltySpec::scad(a).unwrap()),
            (1.01f64..10.0).prop_map(|a| PenaltySpec::mcp(a).unwrap()),
            Just(PenaltySpec::l1()),
        ]
    }

    proptest! {
        #[test]
        fn concave_grad_is_odd_and_bounded(spec in any_spec(), b in -20.0f64..20.0, lam in 0.01f64..5.0) {
            let g = spec.concave_grad(b, lam);
            prop_assert_eq!(g, -spec.concave_grad(-b, lam));
            prop_assert!(g.abs() <= lam + 1e-15);
        }

        #[test]
        fn derivative_bounds(spec in any_spec(), t in 0.0f64..50.0, lam in 0.01f64..5.0) {
            let d = spec.deriv(t, lam);
            prop_assert!((0.0..=lam).contains(&d));
            if spec.family() != PenaltyFamily::L1 && t > spec.a() * lam {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn value_is_integral_of_derivative(spec in any_spec(), t in 0.0f64..20.0, lam in 0.05f64..3.0) {
            // composite Simpson on a fine grid
            let m = 4000;
            let h = t / m as f64;
            let mut s = spec.deriv(0.0, lam) + spec.deriv(t, lam);
            for k in 1..m {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * spec.deriv(k as f64 * h, lam);
            }
            let integral = s * h / 3.0;
            prop_assert!((integral - spec.value(t, lam)).abs() <= 1e-3 * (1.0 + lam * lam));
        }
    }
}
