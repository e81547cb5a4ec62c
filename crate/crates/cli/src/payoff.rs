use inthedge_core::PiecewiseAffine;

use crate::args::{PayoffArgs, PayoffKind};
use crate::config::{require, Config};
use crate::CliError;

/// A payoff as described on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum PayoffSpec {
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
    Custom {
        knots: Vec<(f64, f64)>,
        final_slope: f64,
    },
}

impl PayoffSpec {
    pub fn resolve(args: &PayoffArgs, config: &Config) -> Result<Self, CliError> {
        let kind = require(args.payoff, config.payoff, "payoff")?;
        Ok(match kind {
            PayoffKind::Call => PayoffSpec::Call {
                strike: require(args.strike, config.strike, "strike")?,
            },
            PayoffKind::Put => PayoffSpec::Put {
                strike: require(args.strike, config.strike, "strike")?,
            },
            PayoffKind::Custom => PayoffSpec::Custom {
                knots: require(args.knots.clone(), config.knots.clone(), "knots")?,
                final_slope: require(args.final_slope, config.final_slope, "final-slope")?,
            },
        })
    }

    pub fn build(&self) -> Result<PiecewiseAffine, CliError> {
        Ok(match self {
            PayoffSpec::Call { strike } => PiecewiseAffine::call(*strike)?,
            PayoffSpec::Put { strike } => PiecewiseAffine::put(*strike)?,
            PayoffSpec::Custom { knots, final_slope } => {
                PiecewiseAffine::from_knots(knots, *final_slope)?.normalize()
            }
        })
    }

    pub fn call_strike(&self) -> Option<f64> {
        match self {
            PayoffSpec::Call { strike } => Some(*strike),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_has_two_knots() {
        let put = PayoffSpec::Put { strike: 50.0 }.build().unwrap();
        assert_eq!(put.breakpoints(), &[0.0, 50.0]);
        assert_eq!(put.value_at(0.0), 50.0);
        assert_eq!(put.value_at(80.0), 0.0);
    }

    #[test]
    fn custom_payoff_is_validated() {
        let bad = PayoffSpec::Custom {
            knots: vec![(0.0, 0.0), (0.0, 1.0)],
            final_slope: 0.0,
        };
        assert!(matches!(bad.build(), Err(CliError::Input(_))));
    }
}
