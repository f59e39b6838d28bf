//! JSON source specs: parsing, validation, construction and a canonical hash.
//!
//! ```json
//! {"a": {"kind": "dril", "gamma": 2, "delta": 0},
//!  "b": {"kind": "linear"},
//!  "measure": {"kind": "uniform"}}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branches::{self, BKind, DrilParams, V0};
use crate::error::{Error, Result};
use crate::law::Domain;
use crate::source::{Measure, TentSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ASpec {
    Dril {
        gamma: f64,
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
        /// Constant `V₀` for δ = 0.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<f64>,
    },
    Farey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BSpec {
    Farey,
    /// Linear onto `c`; `c` defaults to `a(1)`.
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform,
    Lin,
    Exp,
    /// Polynomial density `Σ coeffs[k] x^k`, normalised.
    Custom { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub a: ASpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::farey()
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Spec(format!("{name} must be a finite number, got {x}")))
    }
}

impl SourceSpec {
    pub fn farey() -> Self {
        Self {
            a: ASpec::Farey,
            b: Some(BSpec::Farey),
            measure: Some(MeasureSpec::Uniform),
        }
    }

    pub fn dril(gamma: f64, delta: f64) -> Self {
        Self {
            a: ASpec::Dril {
                gamma,
                delta,
                amplitude: None,
                v0: None,
            },
            b: Some(BSpec::Linear { c: None }),
            measure: Some(MeasureSpec::Uniform),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec.normalized())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Spec(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema-level checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        if let ASpec::Dril {
            gamma,
            delta,
            amplitude,
            v0,
        } = &self.a
        {
            finite("a.gamma", *gamma)?;
            finite("a.delta", *delta)?;
            if !Domain::GammaS.contains(*gamma, *delta) {
                return Err(Error::Spec(format!(
                    "a: (gamma, delta) = ({gamma}, {delta}) is outside {}",
                    Domain::GammaS.description()
                )));
            }
            if let Some(a) = amplitude {
                finite("a.amplitude", *a)?;
                if *a <= 0.0 {
                    return Err(Error::Spec(format!("a.amplitude must be positive, got {a}")));
                }
                if *delta == 0.0 {
                    return Err(Error::Spec("a.amplitude is only used for delta != 0; use v0".into()));
                }
            }
            if let Some(v) = v0 {
                finite("a.v0", *v)?;
                if *delta != 0.0 {
                    return Err(Error::Spec("a.v0 is only used for delta = 0".into()));
                }
                if *v <= 0.0 {
                    return Err(Error::Spec(format!("a.v0 must be positive, got {v}")));
                }
            }
        }
        if let Some(BSpec::Linear { c: Some(c) }) = &self.b {
            finite("b.c", *c)?;
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::Spec(format!("b.c must lie in ]0, 1[, got {c}")));
            }
        }
        if let Some(MeasureSpec::Custom { coeffs }) = &self.measure {
            if coeffs.is_empty() {
                return Err(Error::Spec("measure.coeffs must not be empty".into()));
            }
            for (k, c) in coeffs.iter().enumerate() {
                finite(&format!("measure.coeffs[{k}]"), *c)?;
            }
        }
        Ok(())
    }

    /// Fills in defaults so that equal sources hash equally.
    pub fn normalized(&self) -> Self {
        let b = self.b.clone().unwrap_or(match self.a {
            ASpec::Farey => BSpec::Farey,
            ASpec::Dril { .. } => BSpec::Linear { c: None },
        });
        Self {
            a: self.a.clone(),
            b: Some(b),
            measure: Some(self.measure.clone().unwrap_or(MeasureSpec::Uniform)),
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.normalized()).expect("spec serializes")
    }

    /// Hex sha256 of the canonical JSON.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// `γ` of the increasing branch (1 for Farey).
    pub fn gamma(&self) -> f64 {
        match self.a {
            ASpec::Dril { gamma, .. } => gamma,
            ASpec::Farey => 1.0,
        }
    }

    pub fn dril_params(&self) -> Option<DrilParams> {
        match &self.a {
            ASpec::Dril {
                gamma,
                delta,
                amplitude,
                v0,
            } => {
                let mut p = DrilParams::new(*gamma, *delta);
                if let Some(a) = amplitude {
                    p = p.with_amplitude(*a);
                }
                if let Some(v) = v0 {
                    p = p.with_v0(V0::Constant(*v));
                }
                Some(p)
            }
            ASpec::Farey => None,
        }
    }

    pub fn build_source(&self) -> Result<TentSource> {
        self.validate()?;
        let a = match self.dril_params() {
            Some(p) => branches::make_dril_a(&p)?,
            None => branches::Branch::farey_a(),
        };
        let b = match self.normalized().b.expect("normalized") {
            BSpec::Farey => branches::make_b(BKind::Farey)?,
            BSpec::Linear { c } => branches::make_b(BKind::LinearTo(c.unwrap_or_else(|| a.eval(1.0))))?,
        };
        TentSource::new(a, b)
    }

    pub fn build_measure(&self) -> Result<Measure> {
        match self.measure.clone().unwrap_or(MeasureSpec::Uniform) {
            MeasureSpec::Uniform => Ok(Measure::uniform()),
            MeasureSpec::Lin => Ok(Measure::lin()),
            MeasureSpec::Exp => Ok(Measure::exp()),
            MeasureSpec::Custom { coeffs } => Measure::polynomial(&coeffs),
        }
    }
}
