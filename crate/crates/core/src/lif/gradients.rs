//! Closed-form surrogate gradients of a single LIF unit.
//!
//! With Θ₁′ = 1 and Θ₂′ = 0 the derivatives of `y_t` have explicit
//! expressions in terms of the simulated potentials. Each product
//! `∏ carry_{t−i}` vanishes as soon as the window reaches back past a spike,
//! which is what truncates the sums at the most recent reset.
//!
//! These are evaluated from [`simulate_unit`] and do not touch the tape, so
//! they serve as an independent check of tape backward through [`unroll`].
//!
//! [`unroll`]: super::unroll

use super::{simulate_unit, UnitParams};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

fn check_step(x: &[Scalar], t: usize) -> Result<()> {
    if t >= x.len() {
        return Err(Error::OutOfRange(format!(
            "step {t} outside a sequence of length {}",
            x.len()
        )));
    }
    Ok(())
}

/// `∂y_t / ∂x_{t−n} = w_input · (1 − w_leak)ⁿ · ∏_{i=1..n} carry_{t−i}`.
pub fn grad_input_closed_form(x: &[Scalar], p: UnitParams, t: usize, n: usize) -> Result<Scalar> {
    check_step(x, t)?;
    if n > t {
        return Err(Error::OutOfRange(format!("lag {n} reaches before step 0 from step {t}")));
    }
    let run = simulate_unit(&x[..=t], p);
    if (1..=n).any(|i| run.spikes[t - i]) {
        return Ok(0.0);
    }
    Ok(p.w_input * (1.0 - p.w_leak).powi(n as i32))
}

/// `dy_t / dw_input = x_t + Σ_{n≥1} x_{t−n} (1 − w_leak)ⁿ ∏_{i=1..n} carry_{t−i}`.
pub fn grad_winput_closed_form(x: &[Scalar], p: UnitParams, t: usize) -> Result<Scalar> {
    check_step(x, t)?;
    let run = simulate_unit(&x[..=t], p);
    let mut total = x[t];
    for n in 1..=t {
        if run.spikes[t - n] {
            break;
        }
        total += x[t - n] * (1.0 - p.w_leak).powi(n as i32);
    }
    Ok(total)
}

/// `dy_t / dw_leak = −Σ_{n≥1} V_{t−n} (1 − w_leak)^{n−1} ∏_{i=1..n} carry_{t−i}`.
pub fn grad_wleak_closed_form(x: &[Scalar], p: UnitParams, t: usize) -> Result<Scalar> {
    check_step(x, t)?;
    let run = simulate_unit(&x[..=t], p);
    let mut total = 0.0;
    for n in 1..=t {
        if run.spikes[t - n] {
            break;
        }
        total -= run.potentials[t - n] * (1.0 - p.w_leak).powi(n as i32 - 1);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: UnitParams = UnitParams::new(0.5, 0.1, 1.0);

    #[test]
    fn same_step_derivative_is_the_input_weight() {
        assert_eq!(grad_input_closed_form(&[0.3, 0.7], FIG1, 1, 0).unwrap(), 0.5);
    }

    #[test]
    fn two_step_lag_without_reset() {
        let g = grad_input_closed_form(&[0.1, 0.1, 0.1], FIG1, 2, 2).unwrap();
        assert!((g - 0.405).abs() < 1e-15);
    }

    #[test]
    fn reset_inside_the_window_blocks_the_gradient() {
        // spike at step 2, so steps 0..=2 are cut off from step 4
        let x = [1.0; 5];
        assert_eq!(grad_input_closed_form(&x, FIG1, 4, 2).unwrap(), 0.0);
        assert_eq!(grad_input_closed_form(&x, FIG1, 4, 4).unwrap(), 0.0);
        assert!(grad_input_closed_form(&x, FIG1, 4, 1).unwrap() > 0.0);
    }

    #[test]
    fn lag_before_start_is_out_of_range() {
        assert!(grad_input_closed_form(&[1.0, 1.0], FIG1, 1, 2).is_err());
        assert!(grad_input_closed_form(&[1.0, 1.0], FIG1, 2, 0).is_err());
    }

    #[test]
    fn input_weight_gradient_two_steps() {
        let g = grad_winput_closed_form(&[1.0, 1.0], FIG1, 1).unwrap();
        assert!((g - 1.9).abs() < 1e-15);
        assert_eq!(grad_winput_closed_form(&[0.0; 6], FIG1, 5).unwrap(), 0.0);
    }

    #[test]
    fn input_weight_gradient_after_reset_is_current_input() {
        // spike at step 2; step 3 only sees its own input
        let x = [1.0, 1.0, 1.0, 0.25];
        assert_eq!(grad_winput_closed_form(&x, FIG1, 3).unwrap(), 0.25);
    }

    #[test]
    fn leak_gradient_two_steps() {
        assert_eq!(grad_wleak_closed_form(&[1.0, 1.0], FIG1, 1).unwrap(), -0.5);
        assert_eq!(grad_wleak_closed_form(&[1.0, 1.0], FIG1, 0).unwrap(), 0.0);
        assert_eq!(grad_wleak_closed_form(&[1.0, 1.0, 1.0, 1.0], FIG1, 3).unwrap(), 0.0);
    }
}
