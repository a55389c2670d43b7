use proptest::prelude::*;
use weylwalk::walk::{exit_time_tau, mc_survival, sample_path, sign_time};
use weylwalk::{ChamberType, RandomStream, StepDistribution};

fn law(i: usize, k: usize) -> StepDistribution {
    match i {
        0 => StepDistribution::rademacher(k),
        1 => StepDistribution::lazy(k),
        2 => StepDistribution::gaussian(k, 1.0).unwrap(),
        _ => StepDistribution::uniform(k, 3f64.sqrt()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sign_time_never_precedes_exit(
        k in 2usize..=4,
        which in 0usize..4,
        seed in any::<u64>(),
        chamber_c in any::<bool>(),
    ) {
        let chamber = if chamber_c { ChamberType::C } else { ChamberType::D };
        let x: Vec<f64> = (1..=k).map(|i| 3.0 * i as f64).collect();
        let mut s = RandomStream::new(seed, 0);
        let mut p = sample_path(&law(which, k), &x, 200, &mut s).unwrap();
        prop_assert_eq!(p.positions.len(), 201);
        prop_assert_eq!(&p.positions[0], &x);
        p.annotate(chamber, 200, 0.25).unwrap();
        match (p.tau, p.sign_time) {
            (Some(t), Some(s)) => prop_assert!(s >= t),
            (None, s) => prop_assert!(s.is_none()),
            (Some(_), None) => {}
        }
        if let Some(t) = exit_time_tau(chamber, &p) {
            prop_assert!(!chamber.holds(&p.positions[t]));
            prop_assert!(p.positions[..t].iter().all(|y| chamber.holds(y)));
        }
        prop_assert_eq!(sign_time(chamber, &p), p.sign_time);
    }

    #[test]
    fn paths_are_reproducible(seed in any::<u64>(), index in any::<u64>()) {
        let d = StepDistribution::gaussian(3, 1.0).unwrap();
        let a = sample_path(&d, &[0.0, 1.0, 2.0], 50, &mut RandomStream::new(seed, index)).unwrap();
        let b = sample_path(&d, &[0.0, 1.0, 2.0], 50, &mut RandomStream::new(seed, index)).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn survival_counts_do_not_depend_on_thread_count() {
    let d = StepDistribution::rademacher(2);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_survival(&d, ChamberType::C, &[1.0, 2.0], 100, 20_000, 11).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn gaussian_positive_run_matches_sparre_andersen() {
    // for a continuous symmetric law P_0(S_1 > 0, ..., S_n > 0) = C(2n, n) / 4^n;
    // 0 itself is outside the open chamber, so start the count after one step
    let d = StepDistribution::gaussian(1, 1.0).unwrap();
    let total = 400_000u64;
    let runs = weylwalk::stream::par_trajectories(2, total, |_, s| {
        let mut pos = 0.0;
        let mut step = [0.0];
        for m in 0..8 {
            d.sample_step(s, &mut step);
            pos += step[0];
            if pos <= 0.0 {
                return m;
            }
        }
        8
    });
    let mut binom = 1.0;
    for n in 1..=8usize {
        binom *= (2 * n) as f64 * (2 * n - 1) as f64 / (n * n) as f64;
        let exact = binom / 4f64.powi(n as i32);
        let p = runs.iter().filter(|m| **m >= n).count() as f64 / total as f64;
        let se = (exact * (1.0 - exact) / total as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "n = {n}: {p} vs {exact}");
    }
    assert_eq!(mc_survival(&d, ChamberType::C, &[0.0], 3, 10, 0).unwrap().survivors, vec![0; 4]);
}
