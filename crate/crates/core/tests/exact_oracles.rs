use num_traits::Zero;
use proptest::prelude::*;
use weylwalk::exact::{
    brute_force_check, conditional_distribution, restricted_expectation, survival_probability, v_exact,
    LatticeWalkSpec,
};
use weylwalk::htransform::{killed_marginal_exact, transformed_marginal_exact, VTable, VTableConfig};
use weylwalk::{ChamberType, Rational};

fn specs(k: usize) -> Vec<LatticeWalkSpec> {
    vec![LatticeWalkSpec::rademacher(k), LatticeWalkSpec::lazy(k)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp_equals_enumeration_in_two_dimensions(
        a in -3i64..=4,
        b in -3i64..=6,
        n in 0usize..=5,
        lazy in any::<bool>(),
        d in any::<bool>(),
    ) {
        let chamber = if d { ChamberType::D } else { ChamberType::C };
        let spec = specs(2).swap_remove(lazy as usize);
        let x = [a as f64, b as f64];
        let brute = brute_force_check(&spec, chamber, &x, n).unwrap();
        let surv = survival_probability::<Rational>(&spec, chamber, &x, n).unwrap();
        prop_assert_eq!(&surv.probability, &brute.survival);
        let rh = restricted_expectation::<Rational>(&spec, chamber, &x, n, |c| {
            Rational::from_integer(chamber.h_exact(c))
        })
        .unwrap();
        prop_assert_eq!(rh, brute.restricted_h.clone());
        if !brute.survival.is_zero() {
            let law = conditional_distribution::<Rational>(&spec, chamber, &x, n).unwrap();
            prop_assert_eq!(law.atoms, brute.conditional().unwrap());
        }
    }
}

#[test]
fn optional_stopping_matches_restricted_limit() {
    // E[h(S(n)); tau > n] = h(x) - E[h(S(tau)); tau <= n] at every n
    let spec = LatticeWalkSpec::rademacher(2);
    let v = v_exact::<Rational>(&spec, ChamberType::C, &[1.0, 2.0], 40).unwrap();
    assert_eq!(v.value, v.identity_value);
    let v = v_exact::<Rational>(&LatticeWalkSpec::lazy(3), ChamberType::D, &[0.0, 1.0, 3.0], 12).unwrap();
    assert_eq!(v.value, v.identity_value);
}

#[test]
fn transformed_masses_are_killed_masses_times_ratio() {
    let spec = LatticeWalkSpec::rademacher(2);
    let x = [1i64, 2];
    let h = |c: &[i64]| Rational::from_integer(ChamberType::C.h_exact(c));
    let killed = killed_marginal_exact(&spec, ChamberType::C, &x, 4).unwrap();
    let transformed = transformed_marginal_exact(&spec, ChamberType::C, h, &x, 4).unwrap();
    assert_eq!(killed.len(), transformed.len());
    for ((y, p), (y2, q)) in killed.iter().zip(&transformed) {
        assert_eq!(y, y2);
        assert_eq!(q, &(p * h(y) / h(&x)), "{y:?}");
    }
}

#[test]
fn v_table_is_h_where_exits_land_on_walls() {
    // with the simple walk x2 - x1 and x2 + x1 move by 0 or 2, so from points
    // where both are even every exit lands on a wall and V = h
    let spec = LatticeWalkSpec::rademacher(2);
    let cfg = VTableConfig { radius: 60, switchover: None, ..VTableConfig::default() };
    let t = VTable::build(&spec, ChamberType::D, cfg).unwrap();
    for x in [[0.0, 2.0], [1.0, 3.0], [-2.0, 4.0]] {
        let f = v_exact::<f64>(&spec, ChamberType::D, &x, 200).unwrap();
        let h = ChamberType::D.h(&x);
        assert!((f.identity_value - h).abs() < 1e-9 * h, "{x:?}");
        assert!((t.value(&x).unwrap() - h).abs() < 1e-9 * h, "{x:?}");
    }
    // elsewhere the exit correction is positive
    let x = [0.0, 1.0];
    assert!(t.value(&x).unwrap() > ChamberType::D.h(&x));
}
