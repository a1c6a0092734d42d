use genbound::bounds::{fixed_size_bound, variable_size_bound};
use genbound::info::{binary_kl, binary_kl_inverse, kl_divergence, renyi_divergence, Pmf};
use genbound::rd::{rd_curve, Distortion};
use genbound::report::to_canonical_json;
use proptest::prelude::*;

fn pmf(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn pair() -> impl Strategy<Value = (Pmf, Pmf)> {
    (2usize..6).prop_flat_map(|k| (pmf(k..=k), pmf(k..=k))).prop_map(|(p, q)| {
        (Pmf::from_weights(p).unwrap(), Pmf::from_weights(q).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_non_negative_and_zero_on_diagonal((p, q) in pair()) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn renyi_is_monotone_in_order((p, q) in pair(), a in 0.05f64..0.95, b in 1.05f64..6.0) {
        let lo = renyi_divergence(&p, &q, a).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let hi = renyi_divergence(&p, &q, b).unwrap();
        prop_assert!(lo <= kl + 1e-12 && kl <= hi + 1e-12);
    }

    #[test]
    fn kl_inverse_is_feasible_and_tight(a in 0.001f64..0.999, b in 0.0f64..3.0) {
        let p = binary_kl_inverse(a, b);
        prop_assert!(p >= a && p <= 1.0);
        prop_assert!(binary_kl(p, a) <= b + 1e-12);
        if p < 1.0 {
            prop_assert!((binary_kl(p, a) - b).abs() <= 1e-9);
        }
        prop_assert!(p <= a + (2.0 * a * b).sqrt() + 2.0 * b + 1e-12);
    }

    #[test]
    fn rd_is_non_increasing_and_below_entropy(probs in pmf(2..=5), e1 in 0.0f64..0.6, e2 in 0.0f64..0.6) {
        let src = Pmf::new(probs).unwrap();
        let d = Distortion::hamming(src.len());
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let r_lo = rd_curve(&src, &d, lo).unwrap().rate_nats;
        let r_hi = rd_curve(&src, &d, hi).unwrap().rate_nats;
        prop_assert!(r_hi <= r_lo + 1e-8);
        prop_assert!(r_lo <= src.entropy() + 1e-8);
        prop_assert!(r_hi >= 0.0);
    }

    #[test]
    fn bounds_decrease_in_n_and_increase_in_rate(
        rate in 0.0f64..5.0,
        sigma in 0.05f64..2.0,
        n in 2usize..500,
        delta in 0.001f64..0.5,
    ) {
        let v = |r: f64, n: usize| variable_size_bound(r, sigma, n, delta, 0.0).unwrap().bound_value;
        let f = |r: f64, n: usize| fixed_size_bound(r, sigma, n, delta, 0.0).unwrap().bound_value;
        prop_assert!(v(rate, 4 * n) < v(rate, n));
        prop_assert!(f(rate, 4 * n) < f(rate, n));
        prop_assert!(v(rate + 0.5, n) > v(rate, n));
        let r = variable_size_bound(rate, sigma, n, delta, 0.0).unwrap();
        prop_assert!((r.reconstruct() - r.bound_value).abs() <= 1e-12 * (1.0 + r.bound_value));
    }

    #[test]
    fn canonical_floats_round_trip(xs in prop::collection::vec(-1e300f64..1e300, 0..8)) {
        let text = to_canonical_json(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, xs.clone());
        prop_assert_eq!(text, to_canonical_json(&xs).unwrap());
    }
}
