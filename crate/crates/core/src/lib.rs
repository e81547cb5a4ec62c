//! Minimal super-hedging prices of European claims with continuous
//! piecewise-affine payoffs when the hedger may only hold an integer number
//! of shares.
//!
//! The price process is assumed to move, from one date to the next, inside a
//! deterministic multiplicative band `[k_down * S, k_up * S]`. Under that model
//! the minimal super-hedging price at every date is again a continuous
//! piecewise-affine function of the spot, and the optimal share count is an
//! integer-valued step function of the spot. [`pricer::backward_price`]
//! computes both exactly, one date at a time, starting from the payoff.
//!
//! Module map:
//!
//! * [`pwa`]: exact algebra of continuous piecewise-affine functions on `[0, ∞)`.
//! * [`pricer`]: one-step operators and the multi-period backward recursion.
//! * [`call_analytic`]: closed-form one-step solution for `n` calls.
//! * [`real_oracle`]: the price with unrestricted real-valued strategies and
//!   the convergence check of `g(t, x, n) / n` towards it.
//! * [`grid`]: a discretised backward pricer on a uniform spot grid.
//! * [`calibration`]: support bounds estimated from historical price paths.
//! * [`backtest`]: forward replay of the optimal strategy on realised paths.

pub mod backtest;
pub mod calibration;
pub mod call_analytic;
pub mod error;
pub mod grid;
mod par;
pub mod pricer;
pub mod pwa;
pub mod real_oracle;

pub use error::{Error, Result};
pub use pricer::{backward_price, IntegerStepFunction, PricingTable, SupportModel};
pub use pwa::{Affine, PiecewiseAffine};
