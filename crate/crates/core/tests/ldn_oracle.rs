//! Behavioral checks of the Legendre delay memory against independent
//! oracles: a plain ring buffer for the delayed signal, exact linearity, the
//! matrix-exponential semigroup property, and long-stream boundedness.

use proptest::prelude::*;
use softsmith_core::ldn::{build_ldn, decode_weights, LdnBank};

/// Drive a one-channel bank with a sampled signal and return per-tick
/// (full-delay decode, ring-buffer truth) pairs from `skip` on.
fn delayed_pairs(
    signal: impl Fn(f64) -> f64,
    p: usize,
    theta: f64,
    dt: f64,
    ticks: usize,
    skip: usize,
) -> Vec<(f64, f64)> {
    let sys = build_ldn(p, theta, dt).unwrap();
    let delay = (theta / dt).round() as usize;
    let mut bank = LdnBank::new(sys, 1);
    let mut history = Vec::with_capacity(ticks);
    let mut out = Vec::new();
    for k in 0..ticks {
        let u = signal(k as f64 * dt);
        history.push(u);
        bank.step(&[u]).unwrap();
        if k >= skip && k >= delay {
            let decoded = bank.decode_delayed(1.0).unwrap()[0];
            out.push((decoded, history[k - delay]));
        }
    }
    out
}

#[test]
fn full_delay_decode_tracks_ring_buffer_within_five_percent() {
    // 0.5 Hz unit sinusoid at 50 Hz, 0.28 s warmup.
    let pairs = delayed_pairs(
        |t| (2.0 * std::f64::consts::PI * 0.5 * t).sin(),
        3,
        0.14,
        0.02,
        500,
        14,
    );
    assert!(!pairs.is_empty());
    let mse: f64 =
        pairs.iter().map(|(d, t)| (d - t).powi(2)).sum::<f64>() / pairs.len() as f64;
    let rms = mse.sqrt();
    assert!(rms <= 0.05, "delayed-decode RMS {rms} exceeds 5% of amplitude");
}

#[test]
fn faster_signals_degrade_gracefully_up_to_two_hertz() {
    for freq in [1.0, 2.0] {
        let pairs = delayed_pairs(
            |t| (2.0 * std::f64::consts::PI * freq * t).sin(),
            3,
            0.14,
            0.02,
            500,
            14,
        );
        let mse: f64 =
            pairs.iter().map(|(d, t)| (d - t).powi(2)).sum::<f64>() / pairs.len() as f64;
        let rms = mse.sqrt();
        // Three Legendre states cannot be exact at 2 Hz, but the window is
        // short enough that reconstruction stays usable.
        assert!(rms <= 0.25, "{freq} Hz RMS {rms}");
    }
}

#[test]
fn memory_is_exactly_linear_in_the_input() {
    let sys = build_ldn(4, 0.14, 0.02).unwrap();
    let mut bank_a = LdnBank::new(sys.clone(), 2);
    let mut bank_b = LdnBank::new(sys.clone(), 2);
    let mut bank_sum = LdnBank::new(sys, 2);
    let (alpha, beta) = (1.75, -0.4);
    for k in 0..200 {
        let t = k as f64 * 0.02;
        let ua = [t.sin(), (2.0 * t).cos()];
        let ub = [(0.7 * t).cos(), (1.3 * t).sin()];
        let uc = [alpha * ua[0] + beta * ub[0], alpha * ua[1] + beta * ub[1]];
        bank_a.step(&ua).unwrap();
        bank_b.step(&ub).unwrap();
        bank_sum.step(&uc).unwrap();
        let fa = bank_a.flattened();
        let fb = bank_b.flattened();
        let fc = bank_sum.flattened();
        for i in 0..fa.len() {
            let expect = alpha * fa[i] + beta * fb[i];
            assert!((fc[i] - expect).abs() < 1e-12, "state {i} at tick {k}");
        }
    }
}

#[test]
fn two_half_steps_equal_one_full_step() {
    // The zero-order-hold discretization comes from a matrix exponential, so
    // holding the same input over two dt/2 steps must reproduce one dt step.
    let fine = build_ldn(3, 0.14, 0.01).unwrap();
    let coarse = build_ldn(3, 0.14, 0.02).unwrap();
    let mut bank_fine = LdnBank::new(fine, 1);
    let mut bank_coarse = LdnBank::new(coarse, 1);
    for k in 0..300 {
        let u = (k as f64 * 0.11).sin() * 0.8 + 0.3;
        bank_fine.step(&[u]).unwrap();
        bank_fine.step(&[u]).unwrap();
        bank_coarse.step(&[u]).unwrap();
        let ff = bank_fine.flattened();
        let fc = bank_coarse.flattened();
        for i in 0..3 {
            assert!((ff[i] - fc[i]).abs() < 1e-11, "state {i} at tick {k}");
        }
    }
}

#[test]
fn hundred_thousand_steps_stay_bounded() {
    let sys = build_ldn(3, 0.14, 0.02).unwrap();
    let mut bank = LdnBank::new(sys, 1);
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut unit = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut max_state: f64 = 0.0;
    for _ in 0..100_000 {
        bank.step(&[unit()]).unwrap();
        for v in bank.flattened() {
            max_state = max_state.max(v.abs());
        }
    }
    // A stable memory of a unit-bounded signal cannot blow up.
    assert!(max_state < 10.0, "states reached {max_state}");
    let d = bank.decode_delayed(1.0).unwrap()[0];
    assert!(d.is_finite() && d.abs() < 10.0);
}

#[test]
fn intermediate_delays_interpolate_the_window() {
    // For a slow ramp u(t) = t, the decoded estimate at fraction r should be
    // close to u(t - r * theta).
    let sys = build_ldn(3, 0.14, 0.02).unwrap();
    let mut bank = LdnBank::new(sys, 1);
    let dt = 0.02;
    let mut t = 0.0;
    for _ in 0..400 {
        t += dt;
        bank.step(&[t]).unwrap();
    }
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let want = t - r * 0.14;
        let got = bank.decode_delayed(r).unwrap()[0];
        assert!(
            (got - want).abs() < 0.02,
            "r={r}: decoded {got}, expected about {want}"
        );
    }
}

#[test]
fn six_channels_match_six_independent_banks() {
    let sys = build_ldn(3, 0.14, 0.02).unwrap();
    let mut joint = LdnBank::new(sys.clone(), 6);
    let mut singles: Vec<LdnBank> = (0..6).map(|_| LdnBank::new(sys.clone(), 1)).collect();
    for k in 0..150 {
        let u: Vec<f64> = (0..6)
            .map(|c| ((k as f64) * 0.2 + c as f64).sin())
            .collect();
        joint.step(&u).unwrap();
        for (c, single) in singles.iter_mut().enumerate() {
            single.step(&u[c..=c]).unwrap();
        }
        let jf = joint.flattened();
        for c in 0..6 {
            let sf = singles[c].flattened();
            for i in 0..3 {
                assert_eq!(jf[c * 3 + i], sf[i], "channel {c} state {i}");
            }
        }
    }
}

proptest! {
    #[test]
    fn decode_weights_at_full_delay_are_unity(p in 1usize..7) {
        let w = decode_weights(p, 1.0);
        for (i, wi) in w.iter().enumerate() {
            prop_assert!((wi - 1.0).abs() < 1e-9, "w[{i}] = {wi}");
        }
    }

    #[test]
    fn bounded_inputs_keep_states_and_decodes_finite(
        p in 1usize..7,
        seed in 0u64..1000,
        r in 0.0f64..=1.0,
    ) {
        let sys = build_ldn(p, 0.14, 0.02).unwrap();
        let mut bank = LdnBank::new(sys, 2);
        let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(1);
        let mut unit = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..300 {
            bank.step(&[unit(), unit()]).unwrap();
        }
        prop_assert!(bank.flattened().iter().all(|v| v.is_finite() && v.abs() < 50.0));
        let d = bank.decode_delayed(r).unwrap();
        prop_assert!(d.iter().all(|v| v.is_finite()));
    }
}
