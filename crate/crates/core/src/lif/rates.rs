//! Firing-rate analytics under constant input.
//!
//! Counting from the first charged state `V = w_input·I`, the potential after
//! `n` further steps is `w_input·I·Σ_{k=0..n}(1 − w_leak)^k`. Solving for the
//! first `n` that reaches threshold gives
//!
//! ```text
//! n = ceil( ln(1 − (V_thresh/I)·(w_leak/w_input)) / ln(1 − w_leak) − 1 )
//! ```
//!
//! and no spike at all unless `I > I_min = V_thresh·w_leak/w_input`.
//!
//! Note the simulated inter-spike interval is `n + 1`: after a spike the
//! potential resets, and the next step re-charges it to `w_input·I`.

use serde::{Deserialize, Serialize};

use super::UnitParams;
use crate::error::{Error, Result};
use crate::parallel::{map_ordered, Parallelism};
use crate::tensor::Scalar;

/// Relative distance from an integer below which the potential is taken to
/// land exactly on the threshold.
const TIE_TOLERANCE: Scalar = 1e-9;

/// Inputs within this relative distance of `I_min` count as sitting on it:
/// the potential then only approaches the threshold, and whether rounding
/// ever carries it across is arbitrary.
const I_MIN_TOLERANCE: Scalar = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Steps {
    Finite(u64),
    Diverges,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateAnalytics {
    pub steps: Steps,
    pub i_min: Scalar,
}

impl RateAnalytics {
    /// `1/n`, the rate in the formula's own convention. `None` when the unit
    /// never fires or fires on the charging step itself.
    pub fn rate(&self) -> Option<Scalar> {
        match self.steps {
            Steps::Finite(n) if n > 0 => Some(1.0 / n as Scalar),
            _ => None,
        }
    }

    /// Steps between consecutive spikes in the recursive simulation.
    pub fn inter_spike_interval(&self) -> Option<u64> {
        match self.steps {
            Steps::Finite(n) => Some(n + 1),
            Steps::Diverges => None,
        }
    }
}

/// Minimum constant input for which the unit ever spikes.
pub fn min_input(p: UnitParams) -> Result<Scalar> {
    if !(p.w_input > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "w_input must be positive, got {}",
            p.w_input
        )));
    }
    Ok(p.v_thresh * p.w_leak / p.w_input)
}

/// Steps after the charging step until a constant input `i` first drives
/// the potential above threshold.
pub fn steps_to_spike(i: Scalar, p: UnitParams) -> Result<RateAnalytics> {
    if !(i > 0.0) {
        return Err(Error::InvalidParameter(format!("input level must be positive, got {i}")));
    }
    p.validate()?;
    let i_min = min_input(p)?;
    let diverges = RateAnalytics {
        steps: Steps::Diverges,
        i_min,
    };
    if i <= i_min * (1.0 + I_MIN_TOLERANCE) {
        return Ok(diverges);
    }

    let level = if p.w_leak == 0.0 {
        p.v_thresh / (p.w_input * i)
    } else {
        let arg = 1.0 - (p.v_thresh / i) * (p.w_leak / p.w_input);
        if arg <= 0.0 {
            return Ok(diverges);
        }
        arg.ln() / (1.0 - p.w_leak).ln()
    };

    let mut n = (level - 1.0).ceil().max(0.0);
    let nearest = level.round();
    if nearest >= 1.0 && (level - nearest).abs() <= TIE_TOLERANCE * level.max(1.0) {
        // Potential lands on the threshold itself after `nearest − 1` steps;
        // strict crossing depends on how the recursion rounds.
        let k = nearest as u64;
        n = if potential_after(i, p, k - 1) > p.v_thresh {
            (k - 1) as Scalar
        } else {
            k as Scalar
        };
    }
    Ok(RateAnalytics {
        steps: Steps::Finite(n as u64),
        i_min,
    })
}

/// Potential `steps` updates after the charging step, under constant input.
fn potential_after(i: Scalar, p: UnitParams, steps: u64) -> Scalar {
    let drive = p.w_input * i;
    let mut v = drive;
    for _ in 0..steps {
        v = drive + (1.0 - p.w_leak) * v;
    }
    v
}

/// Steps after the charging step until the first spike, found by running
/// the update recursion for at most `max_steps` further steps.
pub fn simulate_steps_to_spike(i: Scalar, p: UnitParams, max_steps: u64) -> Option<u64> {
    let drive = p.w_input * i;
    let decay = 1.0 - p.w_leak;
    let mut v: Scalar = 0.0;
    for k in 0..=max_steps {
        v = drive + decay * v;
        if v > p.v_thresh {
            return Some(k);
        }
    }
    None
}

/// Cartesian grid of unit parameters and constant inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub w_input: Vec<Scalar>,
    pub w_leak: Vec<Scalar>,
    pub inputs: Vec<Scalar>,
    pub v_thresh: Scalar,
}

/// `start, start + step, …` up to and including `stop`. Each value is
/// computed by index and rounded to 12 decimals, so `0.1` steps give `0.3`
/// rather than `0.30000000000000004`.
pub fn linspace_step(start: Scalar, stop: Scalar, step: Scalar) -> Result<Vec<Scalar>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid needs start <= stop and step > 0, got {start}..{stop} by {step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let v = start + k as Scalar * step;
            format!("{v:.12}").parse().expect("formatted float parses")
        })
        .collect())
}

impl RateGrid {
    /// w_input 0.1..1.0, w_leak 0..0.5, i 0.1..2.0, threshold 1.
    pub fn standard() -> Self {
        Self {
            w_input: linspace_step(0.1, 1.0, 0.1).expect("valid range"),
            w_leak: linspace_step(0.0, 0.5, 0.05).expect("valid range"),
            inputs: linspace_step(0.1, 2.0, 0.1).expect("valid range"),
            v_thresh: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w_input.len() * self.w_leak.len() * self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub w_input: Scalar,
    pub w_leak: Scalar,
    pub i: Scalar,
    pub i_min: Scalar,
    pub formula: Steps,
    pub simulated: Option<u64>,
}

impl RateRow {
    pub fn agrees(&self) -> bool {
        match self.formula {
            Steps::Finite(n) => self.simulated == Some(n),
            Steps::Diverges => self.simulated.is_none(),
        }
    }
}

/// Evaluates the closed form and the simulation at every grid point, in
/// w_input, w_leak, i order. Diverging points are simulated for
/// `max_steps` steps.
pub fn sweep_rates(grid: &RateGrid, max_steps: u64, parallelism: Parallelism) -> Result<Vec<RateRow>> {
    let mut points = Vec::with_capacity(grid.len());
    for &w_input in &grid.w_input {
        for &w_leak in &grid.w_leak {
            let p = UnitParams::new(w_input, w_leak, grid.v_thresh);
            p.validate()?;
            for &i in &grid.inputs {
                points.push((p, i));
            }
        }
    }
    map_ordered(&points, parallelism, |_, &(p, i)| {
        let analytic = steps_to_spike(i, p)?;
        Ok(RateRow {
            w_input: p.w_input,
            w_leak: p.w_leak,
            i,
            i_min: analytic.i_min,
            formula: analytic.steps,
            simulated: simulate_steps_to_spike(i, p, max_steps),
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: UnitParams = UnitParams::new(0.5, 0.1, 1.0);

    #[test]
    fn reference_unit_at_unit_input() {
        let r = steps_to_spike(1.0, FIG1).unwrap();
        assert_eq!(r.steps, Steps::Finite(2));
        assert_eq!(r.inter_spike_interval(), Some(3));
        assert_eq!(r.rate(), Some(0.5));
    }

    #[test]
    fn leak_free_unit() {
        let p = UnitParams::new(0.5, 0.0, 1.0);
        assert_eq!(steps_to_spike(1.0, p).unwrap().steps, Steps::Finite(2));
        assert_eq!(min_input(p).unwrap(), 0.0);
        // x = 1/(0.3·1) = 3.33: V = 0.3, 0.6, 0.9, 1.2
        let q = UnitParams::new(0.3, 0.0, 1.0);
        assert_eq!(steps_to_spike(1.0, q).unwrap().steps, Steps::Finite(3));
    }

    #[test]
    fn input_threshold() {
        assert!((min_input(FIG1).unwrap() - 0.2).abs() < 1e-15);
        let doubled = UnitParams::new(0.5, 0.1, 2.0);
        assert_eq!(min_input(doubled).unwrap(), 2.0 * min_input(FIG1).unwrap());
        assert!(min_input(UnitParams::new(0.0, 0.1, 1.0)).is_err());
    }

    #[test]
    fn below_threshold_diverges() {
        let r = steps_to_spike(0.2 * 0.99, FIG1).unwrap();
        assert_eq!(r.steps, Steps::Diverges);
        assert_eq!(r.rate(), None);
    }

    #[test]
    fn input_on_the_threshold_diverges_despite_rounding() {
        // 0.15 / 0.1 evaluates to 1.4999999999999998
        let p = UnitParams::new(0.1, 0.15, 1.0);
        assert!(min_input(p).unwrap() < 1.5);
        assert_eq!(steps_to_spike(1.5, p).unwrap().steps, Steps::Diverges);
        assert_eq!(simulate_steps_to_spike(1.5, p, 1_000_000), None);
    }

    #[test]
    fn non_positive_input_is_an_error() {
        assert!(steps_to_spike(0.0, FIG1).is_err());
        assert!(steps_to_spike(-1.0, FIG1).is_err());
    }

    #[test]
    fn grid_sweep_agrees_with_simulation() {
        let grid = RateGrid::standard();
        assert_eq!(grid.w_input.len(), 10);
        assert_eq!(grid.w_leak.len(), 11);
        assert_eq!(grid.inputs.len(), 20);
        let rows = sweep_rates(&grid, 10_000, Parallelism::Sequential).unwrap();
        assert_eq!(rows.len(), 2200);
        assert!(rows.iter().all(RateRow::agrees));
    }

    #[test]
    fn linspace_rejects_bad_bounds() {
        assert_eq!(linspace_step(0.0, 0.5, 0.25).unwrap(), vec![0.0, 0.25, 0.5]);
        assert_eq!(linspace_step(0.1, 0.3, 0.1).unwrap(), vec![0.1, 0.2, 0.3]);
        assert!(linspace_step(1.0, 0.0, 0.1).is_err());
        assert!(linspace_step(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn strong_input_fires_on_the_charging_step() {
        assert_eq!(steps_to_spike(3.0, FIG1).unwrap().steps, Steps::Finite(0));
    }
}
