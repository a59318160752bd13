use odp_core::autodiff::{Mat, Tape};
use odp_core::params::ParamStore;
use odp_core::transfer::{aggr_mat, aggr_var, ar_predict, ha_baseline, transfer, ArParams, HaMode, TransferParams, Tuning};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::matrix;
use crate::Outcome;

const TOL: f64 = 1e-9;

/// Element-by-element mean of the given 1-based slots, with repeats.
fn loop_average(history: &[Mat], slots: &[usize]) -> Mat {
    let (r, c) = history[0].dim();
    let mut out = Mat::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            let mut s = 0.0;
            for &t in slots {
                s += history[t - 1][[i, j]];
            }
            out[[i, j]] = s / slots.len() as f64;
        }
    }
    out
}

/// Slots averaged by each mode for the slot after `t`, written out from
/// the slice definitions.
fn mode_slots(t: usize, l: usize, p: usize, mode: HaMode) -> Vec<usize> {
    let tendency: Vec<usize> = (1..=p).map(|k| t + 1 - k).collect();
    let periodic: Vec<usize> = (1..=p).map(|k| t + 1 - l * k).collect();
    match mode {
        HaMode::Tendency => tendency,
        HaMode::Periodicity => periodic,
        HaMode::Plus => {
            let mut all = tendency;
            all.extend(periodic);
            all.extend((1..=p).map(|k| t - l * k));
            all.extend((1..=p).map(|k| t + 2 - l * k));
            all
        }
    }
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_ar = 0.0f64;
    let mut worst_ha = 0.0f64;
    let mut cases = 0;
    for _ in 0..200 {
        let l = [2, 3, 24][rng.random_range(0..3)];
        let p = rng.random_range(1..=4);
        let t = l * p + 1 + rng.random_range(0..30);
        let (rows, cols) = (rng.random_range(1..6), rng.random_range(1..6));
        let history: Vec<Mat> = (0..t).map(|_| matrix(rows, cols, 0.0, 50.0, &mut rng)).collect();

        let mut store = ParamStore::new();
        let ar = ArParams::init(p, &mut store);
        let ar_out = ar_predict(&store, &ar, &history, t, l).expect("valid history");
        let ha_plus = ha_baseline(&history, t, l, p, HaMode::Plus).expect("valid history");
        worst_ar = worst_ar.max(max_diff(&ar_out, &ha_plus));

        for mode in [HaMode::Plus, HaMode::Tendency, HaMode::Periodicity] {
            let got = ha_baseline(&history, t, l, p, mode).expect("valid history");
            worst_ha = worst_ha.max(max_diff(&got, &loop_average(&history, &mode_slots(t, l, p, mode))));
        }
        cases += 1;
    }
    Outcome::check(
        worst_ar <= TOL && worst_ha <= TOL,
        format!("{cases} histories; max |AR - HA+| = {worst_ar:.2e}, max |HA - loop| = {worst_ha:.2e}, tol {TOL:e}"),
    )
}

pub fn tuning_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = Vec::new();
    for case in 0..100 {
        let (r, c) = (rng.random_range(1..8), rng.random_range(1..8));
        let a = matrix(r, c, -20.0, 20.0, &mut rng);
        let b = matrix(r, c, -20.0, 20.0, &mut rng);
        let ones = Mat::ones((r, c));
        let zeros = Mat::zeros((r, c));
        let checks = [
            ("mult(1,b)=b", aggr_mat(&ones, &b, Tuning::Mult), &b),
            ("wsum(w=1)=a", aggr_mat(&a, &b, Tuning::WSum(1.0)), &a),
            ("wsum(w=0)=b", aggr_mat(&a, &b, Tuning::WSum(0.0)), &b),
            ("sum(0,b)=b", aggr_mat(&zeros, &b, Tuning::Sum), &b),
            ("none(a,b)=a", aggr_mat(&a, &b, Tuning::None), &a),
        ];
        for (name, got, want) in checks {
            if got != *want {
                failures.push(format!("{name} (case {case})"));
            }
        }
        // The differentiable path must agree with the plain one.
        for tuning in [Tuning::None, Tuning::Sum, Tuning::WSum(0.3), Tuning::Mult] {
            let mut tape = Tape::new();
            let av = tape.constant(a.clone());
            let bv = tape.constant(b.clone());
            let out = aggr_var(&mut tape, av, bv, tuning);
            if *tape.value(out) != aggr_mat(&a, &b, tuning) {
                failures.push(format!("{} on the tape (case {case})", tuning.name()));
            }
        }
    }

    // Mult through both transfer heads: a zero reference forces a zero output.
    let mut zero_hits = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (rng.random_range(2..8), rng.random_range(1..10));
        let mut store = ParamStore::new();
        let params = TransferParams::init(d, 3, Tuning::Mult, &mut store, &mut rng);
        let m = matrix(n, d, -3.0, 3.0, &mut rng);
        let mask = |rng: &mut ChaCha8Rng, rows, cols| {
            Mat::from_shape_simple_fn((rows, cols), || if rng.random::<bool>() { 0.0 } else { rng.random_range(0.5..9.0) })
        };
        let d_ref = mask(&mut rng, n, 1);
        let g_ref = mask(&mut rng, n, n);
        let (dp, gp) = transfer(&store, &params, &m, &d_ref, &g_ref);
        for (p, r) in dp.iter().zip(&d_ref).chain(gp.iter().zip(&g_ref)) {
            if *r == 0.0 {
                zero_hits += 1;
                if *p != 0.0 {
                    failures.push(format!("mult head output {p} at a zero reference (seed {seed})"));
                }
            }
        }
    }
    Outcome::check(
        failures.is_empty() && zero_hits > 0,
        if failures.is_empty() {
            format!("exact on 100 random matrices; {zero_hits} zero-reference entries stay 0")
        } else {
            failures[..failures.len().min(5)].join(", ")
        },
    )
}
