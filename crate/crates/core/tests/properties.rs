use proptest::prelude::*;
use skspin::coherent::build_grid;
use skspin::evaluator::{build_operators, lattice_correlator};
use skspin::oracle::{fd_correlator, DEFAULT_FD_STEP};
use skspin::scalar::cabs;
use skspin::{Component, ContourParams, ExactOracle, HamiltonianSpec, Ordering};

const BETA: f64 = 3.0;
const T_MAX: f64 = 10.0;

/// Ordering, `t`, `t'` on the grid `k/2`, with `t` and `t'` inside the domain
/// of the ordering.
fn ordered_times() -> impl Strategy<Value = (Ordering, f64, f64)> {
    (0usize..3, 0u32..19, 0u32..19).prop_filter_map("outside ordering domain", |(o, a, b)| {
        let ordering = Ordering::ALL[o];
        let ok = match ordering {
            Ordering::Unordered => true,
            Ordering::AntiOrdered => a < b,
            Ordering::TimeOrdered => a > b,
        };
        ok.then_some((ordering, a as f64 / 2.0, b as f64 / 2.0))
    })
}

fn pair() -> impl Strategy<Value = (usize, Component)> {
    (0usize..2, 0usize..3).prop_map(|(x, c)| (x, Component::ALL[c]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fd_correlator_converges_linearly((ordering, t, tp) in ordered_times(), (x, i) in pair(), xp in 0usize..2) {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let exact = ExactOracle::new(&spec).unwrap().correlator(BETA, x, i, t, xp, i, tp).unwrap();
        let dev = |n: usize| {
            let c = ContourParams::new(BETA, T_MAX, n).unwrap();
            let v = fd_correlator(&spec, &c, ordering, c.time_index(t).unwrap(), c.time_index(tp).unwrap(), x, i, xp, i, DEFAULT_FD_STEP).unwrap();
            cabs(v - exact)
        };
        let (d200, d400) = (dev(200), dev(400));
        // the O(1/N) coefficient can vanish at isolated points
        prop_assume!(d400 > 1e-5);
        let ratio = d200 / d400;
        prop_assert!((1.7..=2.3).contains(&ratio), "ratio {ratio} ({d200:e}, {d400:e})");
    }

    #[test]
    fn lattice_error_is_within_first_order_envelope((ordering, t, tp) in ordered_times(), (x, i) in pair(), xp in 0usize..2) {
        let spec = HamiltonianSpec::demo_xz(1.0);
        let exact = ExactOracle::new(&spec).unwrap().correlator(BETA, x, i, t, xp, i, tp).unwrap();
        let contour = ContourParams::new(BETA, T_MAX, 1000).unwrap();
        let grid = build_grid(spec.rep, 2, 12, 24).unwrap();
        let (props, ins) = build_operators(&spec, &contour, &grid).unwrap();
        let v = lattice_correlator(&props, &ins, ordering, contour.time_index(t).unwrap(), contour.time_index(tp).unwrap(), x, i, xp, i).unwrap();
        prop_assert!(cabs(v - exact) < 5e-3, "{v} vs {exact}");
    }
}
