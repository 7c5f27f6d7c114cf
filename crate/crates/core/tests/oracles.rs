mod common;

use common::{bisect_truncated_poisson, transport_oracle};
use proptest::prelude::*;
use zinbgt::em::{solve_hurdle_poisson_m, PoissonMleTable};
use zinbgt::{wasserstein_discrete, DiscretePmf, Transform};

fn pmf_strategy() -> impl Strategy<Value = DiscretePmf> {
    proptest::collection::btree_map(0u64..80, 0.01f64..1.0, 1..12).prop_map(|m| {
        let (support, weights): (Vec<_>, Vec<_>) = m.into_iter().unzip();
        DiscretePmf::from_weights(support, weights).unwrap()
    })
}

fn oracle(a: &DiscretePmf, b: &DiscretePmf, alpha: f64, t: Transform) -> f64 {
    let xs: Vec<f64> = a.support().iter().map(|&v| t.apply(v)).collect();
    let ys: Vec<f64> = b.support().iter().map(|&v| t.apply(v)).collect();
    transport_oracle(&xs, a.mass(), &ys, b.mass(), alpha)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_matches_min_cost_flow(
        a in pmf_strategy(),
        b in pmf_strategy(),
        quadratic in any::<bool>(),
        log in any::<bool>(),
    ) {
        let alpha = if quadratic { 2.0 } else { 1.0 };
        let t = if log { Transform::Log1p } else { Transform::Identity };
        let got = wasserstein_discrete(&a, &b, alpha, t);
        let want = oracle(&a, &b, alpha, t);
        prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

#[test]
fn oracle_hand_examples() {
    assert!((transport_oracle(&[0.0], &[1.0], &[3.0], &[1.0], 1.0) - 3.0).abs() < 1e-15);
    // Half the mass moves one unit.
    let w = transport_oracle(&[0.0, 1.0], &[0.5, 0.5], &[1.0], &[1.0], 2.0);
    assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn poisson_solver_tracks_bisection() {
    let table = PoissonMleTable::shared();
    for i in 0..200 {
        let x = 1.001 + (30.0 - 1.001) * i as f64 / 199.0;
        let got = solve_hurdle_poisson_m(x, table).unwrap();
        assert!((got - bisect_truncated_poisson(x)).abs() <= 1e-3, "x={x}");
    }
    assert_eq!(solve_hurdle_poisson_m(30.5, table).unwrap(), 30.5);
}
