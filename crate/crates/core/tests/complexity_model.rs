use ccg_core::complexity::{
    count_iteration_mults, gain_holds, is_strictly_convex, optimal_p, total_mults, worst_case_mults, Exact,
};

#[test]
fn gain_witness_identity() {
    for n in 1..=300usize {
        let ni = n as i128;
        let g = gain_holds(n).unwrap();
        assert_eq!(g.witness, Exact::new(ni * (ni - 1) * (ni - 5), 3));
        assert_eq!(g.holds, n >= 5 || n == 1, "n = {n}");
    }
}

#[test]
fn optimal_p_matches_exhaustive_search() {
    for n in 1..=400usize {
        let mut best = (1, total_mults(n, 1));
        for p in 2..=n {
            let v = total_mults(n, p);
            if v < best.1 {
                best = (p, v);
            }
        }
        assert_eq!(optimal_p(n).unwrap(), best, "n = {n}");
    }
}

#[test]
fn totals_agree_with_per_iteration_counts() {
    for n in [7usize, 64, 333] {
        assert!(is_strictly_convex(n));
        for p in [1, 2, 5, n] {
            let e = worst_case_mults(n, p).unwrap();
            assert_eq!(e.per_iteration, count_iteration_mults(n, p));
            assert_eq!(e.total_mults, Exact::new(n as i128, p as i128) * Exact::from_integer(e.per_iteration as i128));
        }
    }
}
