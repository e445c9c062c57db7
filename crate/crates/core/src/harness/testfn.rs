use std::fmt;

use crate::error::{OaisError, Result};

/// Bounded test functions `φ` with `|φ| <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    /// `tanh(x_1)`, a clipped identity.
    Tanh,
    /// `1{x_1 > c}`.
    Indicator(f64),
    /// `1`.
    Constant,
}

impl TestFunction {
    /// Parses `tanh`, `indicator:<c>` or `const`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "tanh" => Ok(Self::Tanh),
            "const" => Ok(Self::Constant),
            s => {
                let c = s
                    .strip_prefix("indicator:")
                    .ok_or_else(|| OaisError::Config(format!("unknown test function `{s}`")))?;
                let c: f64 = c
                    .parse()
                    .map_err(|_| OaisError::Config(format!("bad indicator threshold in `{s}`")))?;
                if !c.is_finite() {
                    return Err(OaisError::Config(format!("indicator threshold must be finite in `{s}`")));
                }
                Ok(Self::Indicator(c))
            }
        }
    }

    /// Column-safe name, e.g. `indicator_0.5`.
    pub fn name(&self) -> String {
        match self {
            Self::Tanh => "tanh".into(),
            Self::Indicator(c) => format!("indicator_{c}"),
            Self::Constant => "const".into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Tanh => x[0].tanh(),
            Self::Indicator(c) => {
                if x[0] > c {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Constant => 1.0,
        }
    }

    /// `‖φ‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        1.0
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
