use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

use lacuna::apps::{complex_triplet_patterns, Gaussian};
use lacuna::certify::{certify_all_gaps, certify_measure};
use lacuna::dimfn::{make_dimfn, DimensionFunction, Family};
use lacuna::engine::{init, lattice_point, place_on_lattice, Cube, CubeAddress};
use lacuna::io::{read_tree, write_tree};
use lacuna::numeric::{exp_bounds, int, ln_bounds, rat, root_bounds};
use lacuna::pattern::{key_inequality_scan, normalize, LinearPattern};
use lacuna::schedule::{compute_beta, ordered_tuples, sqrt_d, unrank_tuple};

fn small_rational() -> impl Strategy<Value = BigRational> {
    (-6i64..=6, 1i64..=4).prop_map(|(n, d)| rat(n, d))
}

fn nonzero_pattern(d: usize, m: usize) -> impl Strategy<Value = LinearPattern> {
    proptest::collection::vec(small_rational(), d * m)
        .prop_filter("nonzero", |c| c.iter().any(|x| !x.is_zero()))
        .prop_map(move |c| LinearPattern::new(d, c.chunks(d).map(<[BigRational]>::to_vec).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_form_rescales_original(p in (1usize..=2, 2usize..=3).prop_flat_map(|(d, m)| nonzero_pattern(d, m)),
                                         pts in proptest::collection::vec(small_rational(), 6)) {
        let np = normalize(&p).unwrap();
        let (d, m) = (p.dim(), p.arity());
        prop_assert!(np.base.coeff(m - 1, np.pivot).is_one());
        for l in 0..m {
            for v in 0..d {
                prop_assert!(np.base.coeff(l, v).abs() >= int(1) || np.base.coeff(l, v).is_zero());
            }
        }
        prop_assert_eq!(np.c.clone(), np.base.half_l1());
        let points: Vec<Vec<BigRational>> = (0..m).map(|l| pts[l * d..(l + 1) * d].to_vec()).collect();
        let permuted = np.permute_points(&points);
        prop_assert_eq!(np.eval(&permuted).unwrap(), &np.scale * p.eval(&points).unwrap());
    }

    #[test]
    fn key_inequality_holds(p in (1usize..=2, 2usize..=2).prop_flat_map(|(d, m)| nonzero_pattern(d, m))) {
        let np = normalize(&p).unwrap();
        let report = key_inequality_scan(&np, 2);
        prop_assert_eq!(report.violations, 0);
        prop_assert!(report.half_integer_residues);
    }

    #[test]
    fn key_inequality_holds_ternary(p in nonzero_pattern(1, 3)) {
        let np = normalize(&p).unwrap();
        prop_assert_eq!(key_inequality_scan(&np, 3).violations, 0);
    }

    #[test]
    fn placement_fits_and_lands_on_lattice(p in (1usize..=2, 2usize..=3).prop_flat_map(|(d, m)| nonzero_pattern(d, m)),
                                           offs in proptest::collection::vec(0i64..1000, 2),
                                           block_pick in 0usize..3) {
        let np = normalize(&p).unwrap();
        let d = np.dim();
        let sqrt = sqrt_d(d);
        let beta = compute_beta(&np, &sqrt.hi);
        let delta = rat(1, 1 << 12);
        let side = int(2 * beta as i64) * &delta;
        let lower: Vec<BigRational> = (0..d).map(|v| int(1) + rat(offs[v], 1 << 20)).collect();
        let parent = Cube { address: CubeAddress::root(), lower, side };
        let block = block_pick % np.arity();
        let placed = place_on_lattice(&parent, &np, block, &delta, &sqrt.hi).unwrap();
        let center: Vec<BigRational> = placed.lower.iter().map(|x| x + &delta / int(2)).collect();
        prop_assert_eq!(lattice_point(&np, block, &center, &delta), Some(placed.z.clone()));
        let child = Cube { address: CubeAddress::root(), lower: placed.lower, side: delta };
        prop_assert!(parent.contains_cube(&child));
    }

    #[test]
    fn tuples_unrank_in_lex_order(n in 2u128..7, k in 2usize..4) {
        let total = ordered_tuples(n, k);
        let mut prev: Option<Vec<u64>> = None;
        for r in 0..total {
            let t = unrank_tuple(r, n, k).unwrap();
            let mut sorted = t.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
            prop_assert!(t.iter().all(|&x| (x as u128) < n));
            if let Some(p) = &prev {
                prop_assert!(p < &t);
            }
            prev = Some(t);
        }
        prop_assert!(unrank_tuple(total, n, k).is_none());
    }

    #[test]
    fn roots_and_logs_bracket(n in 1i64..10_000, q in 1u32..5) {
        let x = rat(n, 97);
        let r = root_bounds(&x, q, 40);
        prop_assert!(num_traits::pow(r.lo.clone(), q as usize) <= x);
        prop_assert!(num_traits::pow(r.hi.clone(), q as usize) >= x);
        let l = ln_bounds(&x, 40);
        let back_lo = exp_bounds(&l.lo, 40);
        let back_hi = exp_bounds(&l.hi, 40);
        prop_assert!(back_lo.lo <= x && x <= back_hi.hi);
    }

    #[test]
    fn ratio_condition_is_monotone(s_num in 1i64..8, k in 3u32..30, family in 0u8..2) {
        let fam = if family == 0 { Family::Power } else { Family::PowerLog };
        let h = make_dimfn(fam, &rat(s_num, 8), 1).unwrap();
        let r = rat(1, 1i64 << k);
        let small = rat(1, 1i64 << (k + 1));
        if h.in_domain(&r) {
            let bound = h.eval_bounds(&r, 32).unwrap();
            let t = &bound.lo / &r;
            if h.ratio_ge(&r, &t).unwrap_or(false) {
                prop_assert!(h.ratio_ge(&small, &t).unwrap_or(false));
            }
            prop_assert!(h.h_ge(&r, &bound.lo).unwrap());
        }
    }

    #[test]
    fn complex_identification_commutes(tr in proptest::collection::vec((-4i64..=4, -4i64..=4), 3),
                                       inputs in proptest::collection::vec((-9i64..=9, 1i64..=5), 6)) {
        let t: Vec<Gaussian> = tr.iter().map(|&(a, b)| Gaussian::new(int(a), int(b))).collect();
        prop_assume!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
        let ps = complex_triplet_patterns(&[[t[0].clone(), t[1].clone(), t[2].clone()]]).unwrap();
        let w: Vec<Gaussian> = (0..3).map(|l| Gaussian::new(rat(inputs[2 * l].0, inputs[2 * l].1), rat(inputs[2 * l + 1].0, inputs[2 * l + 1].1))).collect();
        let alpha = (&t[2] - &t[0]) / (&t[2] - &t[1]);
        let one = Gaussian::new(BigRational::one(), BigRational::zero());
        let form = &w[0] - &alpha * &w[1] + (&alpha - one) * &w[2];
        let real: Vec<Vec<BigRational>> = w.iter().map(|z| vec![z.re.clone(), z.im.clone()]).collect();
        let rows: Vec<BigRational> = ps.iter().map(|p| p.eval(&real).unwrap()).collect();
        // zero rows are dropped, so compare on the surviving components
        match rows.len() {
            2 => { prop_assert_eq!(&rows[0], &form.re); prop_assert_eq!(&rows[1], &form.im); }
            _ => prop_assert!(rows[0] == form.re || rows[0] == form.im),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_builds_satisfy_invariants(d in 1usize..=2, p in (1usize..=2).prop_flat_map(|d| nonzero_pattern(d, 2)), depth in 3usize..7, s in 1i64..4) {
        prop_assume!(p.dim() == d);
        let h = make_dimfn(Family::Power, &rat(s, 8), d as u32).unwrap();
        let state = init(d, vec![p], h, 64).unwrap().build(depth).unwrap();
        let report = state.verify_structure().unwrap();
        prop_assert_eq!(report.depth, depth);
        for e in state.entries() {
            prop_assert!(e.check_invariants().is_ok());
        }
        let gaps = certify_all_gaps(&state).unwrap();
        for g in &gaps {
            prop_assert!(g.gap >= g.threshold && g.threshold.is_positive());
        }
        if !state.entries().is_empty() {
            prop_assert!(certify_measure(&state).is_ok());
        }
        let text = write_tree(&state);
        let again = read_tree(&text, 64).unwrap();
        prop_assert_eq!(write_tree(&again), text);
    }
}

#[test]
fn builds_are_deterministic() {
    let make = || {
        let h = DimensionFunction::parse("pow:1/4", 2).unwrap();
        let p = LinearPattern::new(2, vec![vec![int(1), int(1)], vec![int(-2), int(0)], vec![int(1), int(-1)]]).unwrap();
        write_tree(&init(2, vec![p], h, 64).unwrap().build(5).unwrap())
    };
    assert_eq!(make(), make());
}

#[test]
fn lattice_point_rejects_off_lattice() {
    let np = normalize(&LinearPattern::scalar(&[(1, 1), (-2, 1), (1, 1)]).unwrap()).unwrap();
    let delta = rat(1, 576);
    assert!(lattice_point(&np, 0, &[rat(8, 576)], &delta).is_some());
    assert!(lattice_point(&np, 0, &[rat(9, 576)], &delta).is_none());
    assert_eq!(lattice_point(&np, 2, &[rat(4, 576)], &delta), Some(vec![BigInt::zero()]));
}
