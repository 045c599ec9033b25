//! Concave smooth surrogates of the block indicator `1{x > 0}`, their
//! gradients, and the smoothness update that maximizes the gradient.
//!
//! `x` always stands for a block power `tr(W_m J_l)`.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothKind {
    Log,
    Exp,
    Atan,
}

impl SmoothKind {
    pub const ALL: [SmoothKind; 3] = [SmoothKind::Log, SmoothKind::Exp, SmoothKind::Atan];

    /// Factor that makes the gradient-maximized weights of all kinds equal
    /// (`1` for log, `e` for exp, `pi` for atan).
    pub fn normalization(self) -> f64 {
        match self {
            SmoothKind::Log => 1.0,
            SmoothKind::Exp => E,
            SmoothKind::Atan => PI,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SmoothKind::Log => "log",
            SmoothKind::Exp => "exp",
            SmoothKind::Atan => "atan",
        }
    }
}

impl std::str::FromStr for SmoothKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(SmoothKind::Log),
            "exp" => Ok(SmoothKind::Exp),
            "atan" => Ok(SmoothKind::Atan),
            _ => Err(format!("unknown smooth function `{s}` (log, exp, atan)")),
        }
    }
}

/// How the smoothness factor is chosen at every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaRule {
    /// The factor that maximizes the gradient at the current block power.
    GradientMax,
    Fixed(f64),
}

/// Surrogate value `f(x; theta)`.
pub fn smooth_value(kind: SmoothKind, x: f64, theta: f64) -> f64 {
    let r = x / theta;
    match kind {
        SmoothKind::Log => r.ln_1p(),
        SmoothKind::Exp => -(-r).exp_m1(),
        SmoothKind::Atan => 2.0 / PI * r.atan(),
    }
}

/// Gradient-maximizing smoothness factor. For log the maximizer is the limit
/// `theta -> 0`, represented by `eps`; exp and atan peak at `theta = x`,
/// floored at `eps` so that empty blocks stay finite.
pub fn theta_star(kind: SmoothKind, x: f64, eps: f64) -> f64 {
    match kind {
        SmoothKind::Log => eps,
        SmoothKind::Exp | SmoothKind::Atan => x.max(eps),
    }
}

/// Scalar derivative `df/dx` at `(x, theta)`.
pub fn gradient_scale(kind: SmoothKind, x: f64, theta: f64) -> f64 {
    match kind {
        SmoothKind::Log => 1.0 / (x + theta),
        SmoothKind::Exp => (-x / theta).exp() / theta,
        SmoothKind::Atan => 2.0 / PI / (theta * (x / theta).powi(2) + theta),
    }
}

/// Gradient matrix of `W -> f(tr(W J_l); theta)`, which is
/// `gradient_scale * J_l`.
pub fn gradient_matrix(
    kind: SmoothKind,
    w: &DMatrix<Complex64>,
    selector: &DMatrix<Complex64>,
    theta: f64,
) -> DMatrix<Complex64> {
    let x: f64 = w.iter().zip(selector.iter()).map(|(a, b)| (a * b.conj()).re).sum();
    selector * Complex64::new(gradient_scale(kind, x, theta), 0.0)
}

/// Surrogate setup used by the reweighted iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub kind: SmoothKind,
    pub rule: ThetaRule,
    pub eps: f64,
    pub normalize: bool,
}

impl Surrogate {
    fn scale(&self) -> f64 {
        if self.normalize {
            self.kind.normalization()
        } else {
            1.0
        }
    }

    pub fn theta(&self, x: f64) -> f64 {
        match self.rule {
            ThetaRule::GradientMax => theta_star(self.kind, x, self.eps),
            ThetaRule::Fixed(t) => t,
        }
    }

    /// Linearization weight at block power `x`.
    pub fn weight(&self, x: f64) -> f64 {
        self.scale() * gradient_scale(self.kind, x, self.theta(x))
    }

    /// Concave penalty whose derivative is exactly [`Surrogate::weight`].
    ///
    /// With a fixed factor this is the surrogate itself. Under the
    /// gradient-max rule the factor moves with `x`, and the penalty is the
    /// integral of the weight: for log it is `ln(1 + x / eps)`; for exp and
    /// atan it follows the surrogate on `[0, eps]` and continues as
    /// `c + ln(x / eps) / k` beyond, `k` being `e` or `pi`. Each reweighted
    /// step therefore majorizes this penalty and the tracked objective can
    /// only decrease.
    pub fn penalty(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        let raw = match self.rule {
            ThetaRule::Fixed(t) => smooth_value(self.kind, x, t),
            ThetaRule::GradientMax => {
                let eps = self.eps;
                match self.kind {
                    SmoothKind::Log => smooth_value(SmoothKind::Log, x, eps),
                    SmoothKind::Exp if x <= eps => smooth_value(SmoothKind::Exp, x, eps),
                    SmoothKind::Exp => 1.0 - 1.0 / E + (x / eps).ln() / E,
                    SmoothKind::Atan if x <= eps => smooth_value(SmoothKind::Atan, x, eps),
                    SmoothKind::Atan => 0.5 + (x / eps).ln() / PI,
                }
            }
        };
        self.scale() * raw
    }
}
