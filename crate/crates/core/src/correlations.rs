//! Correlation functions `E(θ)` of the relative angle between two
//! measurement axes in a plane.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boxes::ConditionalBox;
use crate::error::{Error, Result};

const THREE_PI_4: f64 = 3.0 * FRAC_PI_4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationModel {
    /// `1 - 2θ/π`.
    #[serde(rename = "classical")]
    ClassicalLinear,
    /// `cos θ`.
    #[serde(rename = "quantum")]
    QuantumCosine,
    /// `1` up to `π/4`, `sin 2θ` between `π/4` and `3π/4`, `-1` beyond.
    Superquantum,
}

impl CorrelationModel {
    pub const ALL: [CorrelationModel; 3] = [
        CorrelationModel::ClassicalLinear,
        CorrelationModel::QuantumCosine,
        CorrelationModel::Superquantum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationModel::ClassicalLinear => "classical",
            CorrelationModel::QuantumCosine => "quantum",
            CorrelationModel::Superquantum => "superquantum",
        }
    }

    /// `E(θ)` for any finite angle. The angle is first reduced to the
    /// relative angle in `[0, π]`.
    pub fn eval(self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::NonFiniteAngle(theta));
        }
        Ok(self.eval_reduced(reduce_angle(theta)))
    }

    /// `E(θ)` for `θ` already in `[0, π]`.
    pub(crate) fn eval_reduced(self, theta: f64) -> f64 {
        match self {
            CorrelationModel::ClassicalLinear => 1.0 - 2.0 * theta / PI,
            CorrelationModel::QuantumCosine => theta.cos(),
            CorrelationModel::Superquantum => {
                if theta <= FRAC_PI_4 {
                    1.0
                } else if theta >= THREE_PI_4 {
                    -1.0
                } else {
                    (2.0 * theta).sin()
                }
            }
        }
    }
}

impl fmt::Display for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrelationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classical" => Ok(CorrelationModel::ClassicalLinear),
            "quantum" => Ok(CorrelationModel::QuantumCosine),
            "superquantum" => Ok(CorrelationModel::Superquantum),
            other => Err(Error::parse(format!(
                "unknown model '{other}' (expected classical, quantum or superquantum)"
            ))),
        }
    }
}

/// Maps any finite angle to the relative angle between two axes in `[0, π]`.
pub fn reduce_angle(theta: f64) -> f64 {
    if (0.0..=PI).contains(&theta) {
        return theta;
    }
    let t = (theta % TAU).abs();
    t.min(TAU - t)
}

/// Largest `|E(π - θ) + E(θ)|` over `grid_size` evenly spaced points of `[0, π]`.
pub fn antisymmetry_residual(model: CorrelationModel, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    let step = PI / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| {
            let theta = i as f64 * step;
            (model.eval_reduced(PI - theta) + model.eval_reduced(theta)).abs()
        })
        .fold(0.0, f64::max))
}

/// Directions of the four coplanar measurement axes, in radians, listed in
/// the order `a'`, `b`, `a`, `b'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisConfiguration {
    pub a_prime: f64,
    pub b: f64,
    pub a: f64,
    pub b_prime: f64,
}

impl AxisConfiguration {
    pub fn new(a_prime: f64, b: f64, a: f64, b_prime: f64) -> Result<Self> {
        for v in [a_prime, b, a, b_prime] {
            if !v.is_finite() {
                return Err(Error::NonFiniteAngle(v));
            }
        }
        Ok(AxisConfiguration {
            a_prime,
            b,
            a,
            b_prime,
        })
    }

    /// Axes at successive angles `spacing` starting from `a' = 0`.
    pub fn from_spacing(spacing: f64) -> Result<Self> {
        Self::new(0.0, spacing, 2.0 * spacing, 3.0 * spacing)
    }

    /// Axes with the three successive relative angles `a'→b`, `b→a`, `a→b'`.
    pub fn from_relative(steps: [f64; 3]) -> Result<Self> {
        let b = steps[0];
        let a = b + steps[1];
        Self::new(0.0, b, a, a + steps[2])
    }

    /// The `π/4`-spaced layout where the CHSH sum reads `3E(π/4) - E(3π/4)`.
    pub fn quarter_pi() -> Self {
        Self::from_spacing(FRAC_PI_4).expect("finite")
    }

    /// Relative angles for settings `[(A,B), (A,B'), (A',B), (A',B')]`,
    /// reduced to `[0, π]`.
    pub fn setting_angles(&self) -> [f64; 4] {
        [
            reduce_angle(self.a - self.b),
            reduce_angle(self.a - self.b_prime),
            reduce_angle(self.a_prime - self.b),
            reduce_angle(self.a_prime - self.b_prime),
        ]
    }
}

/// Correlators `[E(A,B), E(A,B'), E(A',B), E(A',B')]` of `model` at `axes`.
pub fn correlators_at(model: CorrelationModel, axes: &AxisConfiguration) -> [f64; 4] {
    axes.setting_angles().map(|t| model.eval_reduced(t))
}

/// The symmetric box realizing `model` at the given axes.
pub fn box_at_angles(model: CorrelationModel, axes: &AxisConfiguration) -> ConditionalBox {
    ConditionalBox::from_correlations(correlators_at(model, axes))
        .expect("model values lie in [-1, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn reference_values() {
        use CorrelationModel::*;
        assert_eq!(Superquantum.eval(FRAC_PI_4).unwrap(), 1.0);
        assert_eq!(Superquantum.eval(THREE_PI_4).unwrap(), -1.0);
        assert!(Superquantum.eval(FRAC_PI_2).unwrap().abs() < 1e-15);
        assert_eq!(QuantumCosine.eval(0.0).unwrap(), 1.0);
        assert_eq!(ClassicalLinear.eval(FRAC_PI_4).unwrap(), 0.5);
        for m in CorrelationModel::ALL {
            assert_eq!(m.eval(0.0).unwrap(), 1.0, "{m}");
            assert!((m.eval(PI).unwrap() + 1.0).abs() < 1e-15, "{m}");
        }
    }

    #[test]
    fn non_finite_angle_is_rejected() {
        assert!(matches!(
            CorrelationModel::QuantumCosine.eval(f64::NAN),
            Err(Error::NonFiniteAngle(_))
        ));
        assert!(CorrelationModel::Superquantum.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn angle_reduction() {
        assert_eq!(reduce_angle(-FRAC_PI_4), FRAC_PI_4);
        assert!((reduce_angle(TAU - 0.5) - 0.5).abs() < 1e-15);
        assert!((reduce_angle(3.0 * TAU + 1.0) - 1.0).abs() < 1e-12);
        assert!((reduce_angle(1.5 * PI) - 0.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn residuals_vanish() {
        for m in CorrelationModel::ALL {
            assert!(antisymmetry_residual(m, 1000).unwrap() < 1e-12, "{m}");
        }
        assert!(matches!(
            antisymmetry_residual(CorrelationModel::Superquantum, 1),
            Err(Error::GridTooSmall(1))
        ));
    }

    #[test]
    fn superquantum_is_c1_at_joins() {
        let h = 1e-6;
        let e = |t: f64| CorrelationModel::Superquantum.eval_reduced(t);
        for join in [FRAC_PI_4, THREE_PI_4] {
            assert!((e(join + h) - e(join)).abs() < 1e-4);
            assert!((e(join) - e(join - h)).abs() < 1e-4);
            let right = (e(join + h) - e(join)) / h;
            let left = (e(join) - e(join - h)) / h;
            assert!(right.abs() < 1e-4, "right derivative {right} at {join}");
            assert!(left.abs() < 1e-4, "left derivative {left} at {join}");
        }
    }

    #[test]
    fn superquantum_is_nonincreasing() {
        let n = 10_000;
        let vals: Vec<f64> = (0..=n)
            .map(|i| CorrelationModel::Superquantum.eval_reduced(PI * i as f64 / n as f64))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quarter_pi_layout() {
        let axes = AxisConfiguration::quarter_pi();
        let [ab, abp, apb, apbp] = axes.setting_angles();
        assert_eq!(ab, FRAC_PI_4);
        assert_eq!(abp, FRAC_PI_4);
        assert_eq!(apb, FRAC_PI_4);
        assert!((apbp - THREE_PI_4).abs() < 1e-15);
    }

    #[test]
    fn box_at_angles_examples() {
        let axes = AxisConfiguration::quarter_pi();
        assert_eq!(
            box_at_angles(CorrelationModel::Superquantum, &axes),
            ConditionalBox::pr()
        );
        let q = box_at_angles(CorrelationModel::QuantumCosine, &axes);
        let [e00, e01, e10, e11] = q.correlators();
        assert!((e00 + e01 + e10 - e11 - 2.0 * 2f64.sqrt()).abs() < 1e-12);

        let aligned = AxisConfiguration::new(0.3, 0.3, 0.3, 0.3).unwrap();
        for m in CorrelationModel::ALL {
            assert_eq!(box_at_angles(m, &aligned).correlators(), [1.0; 4]);
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in CorrelationModel::ALL {
            assert_eq!(m.name().parse::<CorrelationModel>().unwrap(), m);
        }
        assert!("bogus".parse::<CorrelationModel>().is_err());
    }

    proptest! {
        #[test]
        fn values_stay_in_range(theta in -20.0f64..20.0) {
            for m in CorrelationModel::ALL {
                let e = m.eval(theta).unwrap();
                prop_assert!((-1.0..=1.0).contains(&e));
            }
        }

        #[test]
        fn reduction_lands_in_half_turn(theta in -1e3f64..1e3) {
            let r = reduce_angle(theta);
            prop_assert!((0.0..=PI).contains(&r));
            prop_assert!((r.cos() - theta.cos()).abs() < 1e-9);
        }
    }
}
