use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikegrad::autodiff::Tape;
use spikegrad::lif::{
    self, grad_input_closed_form, grad_wleak_closed_form, grad_winput_closed_form, min_input,
    steps_to_spike, GradientMode, LifParams, Steps, UnitParams,
};
use spikegrad::{Scalar, Tensor};

const FIG1: UnitParams = UnitParams::new(0.5, 0.1, 1.0);

/// Independent scalar LIF: returns (potentials, spikes).
fn reference(x: &[Scalar], p: UnitParams) -> (Vec<Scalar>, Vec<bool>) {
    let (mut v, mut spiked) = (0.0, false);
    let mut out = (vec![], vec![]);
    for &xt in x {
        v = p.w_input * xt + if spiked { 0.0 } else { (1.0 - p.w_leak) * v };
        spiked = v > p.v_thresh;
        out.0.push(v);
        out.1.push(spiked);
    }
    out
}

/// Tape gradients of `Σ_{t∈steps} y_t` w.r.t. (x, w_input, w_leak) for one unit.
fn tape_grads(x: &[Scalar], p: UnitParams, steps: Option<usize>) -> (Vec<Scalar>, Scalar, Scalar) {
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::new(vec![x.len(), 1], x.to_vec()).unwrap());
    let wi = tape.leaf(Tensor::row(vec![p.w_input]));
    let wl = tape.leaf(Tensor::row(vec![p.w_leak]));
    let out = lif::unroll(&mut tape, xv, wi, wl, p.v_thresh, GradientMode::Surrogate).unwrap();
    let target = match steps {
        Some(t) => tape.slice(out.spikes, 0, t, 1).unwrap(),
        None => out.spikes,
    };
    let loss = tape.sum(target).unwrap();
    let g = tape.backward(loss).unwrap();
    (
        g.wrt(xv).into_data(),
        g.wrt(wi).data()[0],
        g.wrt(wl).data()[0],
    )
}

fn close(a: Scalar, b: Scalar, rtol: Scalar) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) || (a == 0.0 && b == 0.0)
}

#[test]
fn constant_drive_reproduces_hand_iteration() {
    let (v, s) = reference(&[1.0; 9], FIG1);
    assert_eq!(&v[..3], &[0.5, 0.95, 1.355]);
    let params = LifParams::uniform(1, FIG1).unwrap();
    let x = Tensor::new(vec![1, 9, 1], vec![1.0; 9]).unwrap();
    let raster = &lif::lif_forward(&x, &params, true).unwrap()[0];
    assert_eq!(raster.neuron(0), s.as_slice());
    assert_eq!(raster.spike_times(0), vec![2, 5, 8]);
}

#[test]
fn reference_trace_integrates_fires_and_decays() {
    let mut x = vec![0.0; 10];
    x.extend(vec![0.8; 10]);
    x.extend(vec![0.0; 10]);
    let (v, s) = reference(&x, FIG1);
    assert!(v[10..13].windows(2).all(|w| w[1] > w[0]), "integration");
    assert!(s[10..20].iter().any(|&b| b), "spike");
    assert!(v[21..30].windows(2).all(|w| w[1] < w[0]), "decay");
    assert!(s[20..].iter().all(|&b| !b));
}

#[test]
fn surrogate_gradient_on_two_step_sequence() {
    let (gx, gwi, gwl) = tape_grads(&[1.0, 1.0], FIG1, Some(1));
    assert!(close(gx[1], 0.5, 1e-15));
    assert!(close(gx[0], 0.45, 1e-15));
    assert!(close(gwi, 1.9, 1e-15));
    assert!(close(gwl, -0.5, 1e-15));
}

#[test]
fn tape_matches_closed_forms_on_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let len = rng.gen_range(1..=50);
        let x: Vec<Scalar> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
        let p = UnitParams::new(rng.gen_range(0.1..1.0), rng.gen_range(0.0..0.5), 1.0);
        let (gx, gwi, gwl) = tape_grads(&x, p, None);
        for s in 0..len {
            let oracle: Scalar = (s..len)
                .map(|t| grad_input_closed_form(&x, p, t, t - s).unwrap())
                .sum();
            assert!(close(gx[s], oracle, 1e-8), "x[{s}]: {} vs {oracle}", gx[s]);
        }
        let oracle_wi: Scalar = (0..len).map(|t| grad_winput_closed_form(&x, p, t).unwrap()).sum();
        let oracle_wl: Scalar = (0..len).map(|t| grad_wleak_closed_form(&x, p, t).unwrap()).sum();
        assert!(close(gwi, oracle_wi, 1e-8), "{gwi} vs {oracle_wi}");
        assert!(close(gwl, oracle_wl, 1e-8), "{gwl} vs {oracle_wl}");
    }
}

#[test]
fn disabled_mode_blocks_input_gradients() {
    let x = vec![1.0; 8];
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::new(vec![8, 1], x).unwrap());
    let wi = tape.leaf(Tensor::row(vec![0.5]));
    let wl = tape.leaf(Tensor::row(vec![0.1]));
    let out = lif::unroll(&mut tape, xv, wi, wl, 1.0, GradientMode::Disabled).unwrap();
    let loss = tape.sum(out.spikes).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.wrt(xv).data().iter().all(|&v| v == 0.0));
    assert_eq!(g.wrt(wi).data(), &[0.0]);
    assert_eq!(g.wrt(wl).data(), &[0.0]);
}

#[test]
fn threshold_input_level_by_simulation() {
    let i_min = min_input(FIG1).unwrap();
    assert!((i_min - 0.2).abs() < 1e-15);
    let (_, above) = reference(&vec![0.21; 1000], FIG1);
    assert!(above.iter().any(|&s| s));
    let (_, below) = reference(&vec![0.19; 1_000_000], FIG1);
    assert!(below.iter().all(|&s| !s));
    let (_, barely) = reference(&vec![i_min * 0.99; 1_000_000], FIG1);
    assert!(barely.iter().all(|&s| !s));
}

#[test]
fn rate_formula_matches_simulation_at_reference_point() {
    // charging step V = 0.5, then 0.95, 1.355
    assert_eq!(steps_to_spike(1.0, FIG1).unwrap().steps, Steps::Finite(2));
    let (_, s) = reference(&[1.0; 3], FIG1);
    assert_eq!(s.iter().position(|&b| b), Some(2));
}

#[test]
fn firing_depends_on_input_and_leak_separately() {
    // Find two parameter pairs that tie at one input level and differ at another.
    let levels: Vec<Scalar> = (1..=20).map(|k| k as Scalar / 10.0).collect();
    let grid: Vec<UnitParams> = (1..=10)
        .flat_map(|a| (0..=10).map(move |b| UnitParams::new(a as Scalar / 10.0, b as Scalar * 0.05, 1.0)))
        .collect();
    let n_at = |p: UnitParams, i: Scalar| steps_to_spike(i, p).unwrap().steps;
    let found = grid.iter().enumerate().any(|(ai, &a)| {
        grid[ai + 1..].iter().any(|&b| {
            let ratio_differs = (a.w_input / a.w_leak.max(1e-12) - b.w_input / b.w_leak.max(1e-12)).abs() > 1e-9;
            ratio_differs
                && levels.iter().any(|&i1| {
                    matches!(n_at(a, i1), Steps::Finite(_))
                        && n_at(a, i1) == n_at(b, i1)
                        && levels.iter().any(|&i2| n_at(a, i2) != n_at(b, i2))
                })
        })
    });
    assert!(found);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_deterministic_and_resets_after_spikes(
        x in prop::collection::vec(0.0..2.0f64, 1..60),
        w_input in 0.05..1.5f64,
        w_leak in 0.0..0.9f64,
    ) {
        let p = UnitParams::new(w_input as Scalar, w_leak as Scalar, 1.0);
        let xs: Vec<Scalar> = x.iter().map(|&v| v as Scalar).collect();
        let params = LifParams::uniform(1, p).unwrap();
        let input = Tensor::new(vec![1, xs.len(), 1], xs.clone()).unwrap();
        let a = lif::lif_forward(&input, &params, true).unwrap();
        let b = lif::lif_forward(&input, &params, true).unwrap();
        prop_assert_eq!(&a, &b);
        let raster = &a[0];
        for t in 0..xs.len() {
            let v = raster.potential(0, t).unwrap();
            prop_assert_eq!(raster.get(0, t), v > 1.0);
            if t + 1 < xs.len() && raster.get(0, t) {
                prop_assert_eq!(raster.potential(0, t + 1).unwrap(), p.w_input * xs[t + 1]);
            }
        }
    }

    #[test]
    fn leak_gradient_is_never_positive_for_non_negative_input(
        x in prop::collection::vec(0.0..2.0f64, 1..50),
        w_input in 0.05..1.0f64,
        w_leak in 0.0..0.5f64,
    ) {
        let p = UnitParams::new(w_input as Scalar, w_leak as Scalar, 1.0);
        let xs: Vec<Scalar> = x.iter().map(|&v| v as Scalar).collect();
        for t in 0..xs.len() {
            prop_assert!(grad_wleak_closed_form(&xs, p, t).unwrap() <= 0.0);
        }
    }
}
