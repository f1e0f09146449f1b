use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the constant-stepsize rule `α = √((1 + V^p_{T,1}) / (T + V^g_{T,1}))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedFrom {
    pub path_variation: f64,
    pub grad_variation: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeSchedule {
    /// `α₀ = 1`, `α_t = 1/√t`.
    #[default]
    Diminishing,
    Constant {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        derived_from: Option<DerivedFrom>,
    },
}

impl StepsizeSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "constant stepsize must be positive and finite, got {alpha}"
            )));
        }
        Ok(StepsizeSchedule::Constant {
            alpha,
            derived_from: None,
        })
    }

    /// The tuned constant stepsize for horizon `T` given `V^p_{T,1}` and `V^g_{T,1}`.
    pub fn tuned_constant(path_variation: f64, grad_variation: f64, horizon: usize) -> Result<Self> {
        if path_variation < 0.0 || grad_variation < 0.0 || horizon == 0 {
            return Err(Error::InvalidArgument(format!(
                "tuned stepsize needs nonnegative variations and T ≥ 1, got V^p={path_variation}, V^g={grad_variation}, T={horizon}"
            )));
        }
        let alpha = ((1.0 + path_variation) / (horizon as f64 + grad_variation)).sqrt();
        Ok(StepsizeSchedule::Constant {
            alpha,
            derived_from: Some(DerivedFrom {
                path_variation,
                grad_variation,
                horizon,
            }),
        })
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepsizeSchedule::Diminishing if t == 0 => 1.0,
            StepsizeSchedule::Diminishing => 1.0 / (t as f64).sqrt(),
            StepsizeSchedule::Constant { alpha, .. } => alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepsizeSchedule::Diminishing => Ok(()),
            StepsizeSchedule::Constant { alpha, .. } => Self::constant(alpha).map(|_| ()),
        }
    }
}

impl fmt::Display for StepsizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepsizeSchedule::Diminishing => f.write_str("diminishing"),
            StepsizeSchedule::Constant { alpha, .. } => write!(f, "constant:{alpha}"),
        }
    }
}

/// Command-line form. `constant` without a value asks the caller to tune the
/// stepsize from the problem's variation measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeArg {
    Schedule(StepsizeSchedule),
    TunedConstant,
}

impl FromStr for StepsizeArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            None if s == "diminishing" => Ok(StepsizeArg::Schedule(StepsizeSchedule::Diminishing)),
            None if s == "constant" => Ok(StepsizeArg::TunedConstant),
            Some(("constant", v)) => {
                let alpha: f64 = v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad stepsize value `{v}`")))?;
                Ok(StepsizeArg::Schedule(StepsizeSchedule::constant(alpha)?))
            }
            _ => Err(Error::InvalidArgument(format!(
                "stepsize must be `diminishing`, `constant` or `constant:ALPHA`, got `{s}`"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diminishing_values() {
        let s = StepsizeSchedule::Diminishing;
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(1), 1.0);
        assert_eq!(s.at(4), 0.5);
        assert_eq!(s.at(100), 0.1);
    }

    #[test]
    fn tuned_constant_without_variation() {
        let s = StepsizeSchedule::tuned_constant(0.0, 0.0, 4).unwrap();
        assert_eq!(s.at(0), 0.5);
        assert_eq!(s.at(3), 0.5);
        let s = StepsizeSchedule::tuned_constant(3.0, 12.0, 4).unwrap();
        assert_eq!(s.at(9), 0.5);
    }

    #[test]
    fn parse_cli_forms() {
        assert_eq!(
            "diminishing".parse::<StepsizeArg>().unwrap(),
            StepsizeArg::Schedule(StepsizeSchedule::Diminishing)
        );
        assert_eq!("constant".parse::<StepsizeArg>().unwrap(), StepsizeArg::TunedConstant);
        assert_eq!(
            "constant:0.25".parse::<StepsizeArg>().unwrap(),
            StepsizeArg::Schedule(StepsizeSchedule::constant(0.25).unwrap())
        );
        assert!("constant:-1".parse::<StepsizeArg>().is_err());
        assert!("adaptive".parse::<StepsizeArg>().is_err());
    }

    #[test]
    fn config_form() {
        let s: StepsizeSchedule = toml::from_str("kind = \"constant\"\nalpha = 0.1").unwrap();
        assert_eq!(s, StepsizeSchedule::constant(0.1).unwrap());
        assert!(toml::from_str::<StepsizeSchedule>("kind = \"constant\"\nalpah = 0.1").is_err());
    }
}
