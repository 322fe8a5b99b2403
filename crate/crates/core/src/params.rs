//! Exogenous market parameters and endogenous penalty multipliers.
//!
//! Units follow a seconds-based convention: rates are shares per second,
//! prices are dollars per share, `horizon` is in seconds.

use serde::{Deserialize, Serialize};

/// Market and model parameters. Construction never fails; see
/// [`ModelParams::invariant_violations`] for the checks a solve runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Price drift, $/share/sec.
    pub mu: f64,
    /// Price volatility, $/share/sec^0.5.
    pub sigma: f64,
    /// Permanent impact, $/share^2.
    pub gamma: f64,
    /// Fixed temporary impact, $/share.
    pub eta0: f64,
    /// Market-order temporary impact.
    pub eta1: f64,
    /// Limit-order temporary impact.
    pub eta2: f64,
    /// Correlation between fill noise and price noise.
    pub rho: f64,
    /// Constant fill-uncertainty coefficient, share/sec^0.5.
    pub m0: f64,
    /// Linear fill-uncertainty coefficient, sec^0.5.
    pub m1: f64,
    /// Trading horizon, sec.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Initial position, shares.
    pub x0: f64,
    /// Initial price, $/share.
    #[serde(rename = "S0")]
    pub s0: f64,
}

impl ModelParams {
    /// One-hour sell program of 10,000 shares at $40 with no fill uncertainty.
    pub fn baseline() -> Self {
        Self {
            mu: 1e-6,
            sigma: 0.005,
            gamma: 2.5e-7,
            eta0: 0.05,
            eta1: 0.1,
            eta2: 0.08,
            rho: -0.2,
            m0: 0.0,
            m1: 0.0,
            horizon: 3600.0,
            x0: 10_000.0,
            s0: 40.0,
        }
    }

    /// `m0 = p0 * x0 / sqrt(T)`.
    pub fn m0_from_p0(p0: f64, x0: f64, horizon: f64) -> f64 {
        p0 * x0 / horizon.sqrt()
    }

    /// `m1 = p1 * sqrt(T)`.
    pub fn m1_from_p1(p1: f64, horizon: f64) -> f64 {
        p1 * horizon.sqrt()
    }

    pub fn with_constant_uncertainty(mut self, p0: f64) -> Self {
        self.m0 = Self::m0_from_p0(p0, self.x0, self.horizon);
        self.m1 = 0.0;
        self
    }

    pub fn with_linear_uncertainty(mut self, p1: f64) -> Self {
        self.m0 = 0.0;
        self.m1 = Self::m1_from_p1(p1, self.horizon);
        self
    }

    pub fn with_affine_uncertainty(mut self, p0: f64, p1: f64) -> Self {
        self.m0 = Self::m0_from_p0(p0, self.x0, self.horizon);
        self.m1 = Self::m1_from_p1(p1, self.horizon);
        self
    }

    /// Fill uncertainty `m(L) = m0 + m1 L`.
    #[inline]
    pub fn fill_uncertainty(&self, limit_rate: f64) -> f64 {
        self.m0 + self.m1 * limit_rate
    }

    /// Temporary impact `h(v, L) = -eta0 - eta1 v - eta2 L`.
    #[inline]
    pub fn temporary_impact(&self, market_rate: f64, limit_rate: f64) -> f64 {
        -self.eta0 - self.eta1 * market_rate - self.eta2 * limit_rate
    }

    /// True when `rho * m(L) < 0` for every `L >= 0`. Diagnostic only.
    pub fn has_adverse_selection(&self) -> bool {
        let a = self.rho * self.m0;
        let b = self.rho * self.m1;
        a <= 0.0 && b <= 0.0 && (a < 0.0 || b < 0.0)
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let fields = [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("eta0", self.eta0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("rho", self.rho),
            ("m0", self.m0),
            ("m1", self.m1),
            ("T", self.horizon),
            ("x0", self.x0),
            ("S0", self.s0),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                out.push(format!("{name} is not finite"));
            }
        }
        let positive = [
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("T", self.horizon),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                out.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        if !(self.eta0 >= 0.0) {
            out.push(format!("eta0 must be >= 0 (got {})", self.eta0));
        }
        if !(self.rho.abs() < 1.0) {
            out.push(format!("|rho| must be < 1 (got {})", self.rho));
        }
        out
    }
}

/// Lagrange multipliers and penalty coefficients chosen by the trader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Trade-director multiplier on `v L`.
    pub alpha: f64,
    /// Terminal non-liquidation penalty, $/share^2.
    pub beta: f64,
    /// Market-speed multiplier.
    pub beta1: f64,
    /// Limit-speed multiplier.
    pub beta2: f64,
    /// Squared market-speed cap `r1^2`.
    #[serde(rename = "R1")]
    pub r1_sq: f64,
    /// Squared limit-speed cap `r2^2`.
    #[serde(rename = "R2")]
    pub r2_sq: f64,
}

impl PenaltyParams {
    /// Baseline multipliers with the speed caps defaulted to `(x0 / T)^2`.
    pub fn baseline(model: &ModelParams) -> Self {
        let cap = Self::default_speed_cap_sq(model);
        Self {
            alpha: 0.15,
            beta: 1e-3,
            beta1: 5e-4,
            beta2: 1e-4,
            r1_sq: cap,
            r2_sq: cap,
        }
    }

    /// `(x0 / T)^2`, the TWAP rate squared. Only shifts `c(t)`.
    pub fn default_speed_cap_sq(model: &ModelParams) -> f64 {
        let r = model.x0 / model.horizon;
        r * r
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("R1", self.r1_sq),
            ("R2", self.r2_sq),
        ];
        fields
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(name, v)| format!("{name} must be finite and >= 0 (got {v})"))
            .collect()
    }
}
