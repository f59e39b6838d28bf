//! Asymptotic laws `K n^{−β} (log n)^δ` and the parameter domains they live in.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter domains for `(β, δ)` pairs (or `(γ, δ)` for `GammaS`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    GammaQ,
    GammaQStar,
    GammaM,
    GammaMStar,
    GammaS,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::GammaQ => "Gamma_Q",
            Domain::GammaQStar => "Gamma_Q*",
            Domain::GammaM => "Gamma_M",
            Domain::GammaMStar => "Gamma_M*",
            Domain::GammaS => "Gamma_S",
        }
    }

    pub fn contains(self, beta: f64, delta: f64) -> bool {
        if !(beta.is_finite() && delta.is_finite()) {
            return false;
        }
        let open01 = beta > 0.0 && beta < 1.0;
        match self {
            Domain::GammaQ => open01 || (beta == 1.0 && delta > -1.0) || (beta == 0.0 && delta < 0.0),
            Domain::GammaQStar => open01 || (beta == 1.0 && delta >= 0.0),
            Domain::GammaM => open01 || (beta == 1.0 && delta < 0.0) || (beta == 0.0 && delta > 0.0),
            Domain::GammaMStar => open01 || (beta == 1.0 && delta <= -1.0),
            Domain::GammaS => beta > 1.0 || (beta == 1.0 && delta <= 0.0),
        }
    }

    pub fn check(self, beta: f64, delta: f64) -> Result<()> {
        if self.contains(beta, delta) {
            Ok(())
        } else {
            Err(Error::Domain {
                set: self.name(),
                beta,
                delta,
                detail: self.description().into(),
            })
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Domain::GammaQ => "]0,1[ x R  u  {1} x ]-1,inf[  u  {0} x ]-inf,0[",
            Domain::GammaQStar => "]0,1[ x R  u  {1} x [0,inf[",
            Domain::GammaM => "]0,1[ x R  u  {1} x ]-inf,0[  u  {0} x ]0,inf[",
            Domain::GammaMStar => "]0,1[ x R  u  {1} x ]-inf,-1]",
            Domain::GammaS => "]1,inf[ x R  u  {1} x ]-inf,0]",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `q(n) ∼ K n^{−β} (log n)^δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticLaw {
    #[serde(rename = "K")]
    pub k: f64,
    pub beta: f64,
    pub delta: f64,
    pub domain: Domain,
}

impl AsymptoticLaw {
    /// Builds a law and checks `(β, δ)` against its domain.
    pub fn new(k: f64, beta: f64, delta: f64, domain: Domain) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("law constant K must be positive, got {k}")));
        }
        domain.check(beta, delta)?;
        Ok(Self { k, beta, delta, domain })
    }

    /// A fitted law, tagged but not required to lie in its domain.
    pub fn fitted(k: f64, beta: f64, delta: f64) -> Self {
        Self {
            k,
            beta,
            delta,
            domain: Domain::GammaQ,
        }
    }

    pub fn in_domain(&self) -> bool {
        self.domain.contains(self.beta, self.delta)
    }

    /// `K n^{−β} (log n)^δ` for `n > 1`.
    pub fn eval(&self, n: f64) -> f64 {
        let ln = n.ln();
        if self.delta == 0.0 {
            return self.k * (-self.beta * ln).exp();
        }
        self.k * (-self.beta * ln + self.delta * ln.ln()).exp()
    }
}
