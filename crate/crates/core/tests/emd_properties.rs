use ousio::emd::{eemd, emd, EemdConfig};
use ousio::Execution;
use proptest::prelude::*;

/// Local extrema after collapsing runs of equal values.
fn extrema(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.dedup();
    v.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count()
}

fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count()
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    (8usize..400, any::<u64>(), 0.0f64..3.0).prop_map(|(n, seed, tone)| {
        // xorshift noise plus an optional tone keeps shrinking cheap
        let mut s = seed | 1;
        (0..n)
            .map(|t| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 + tone * (t as f64 / 7.3).sin()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn components_sum_to_input(x in series()) {
        let d = emd(&x).unwrap();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (a, b) in d.reconstruct().iter().zip(&x) {
            prop_assert!((a - b).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn converged_imfs_meet_the_count_condition(x in series()) {
        for imf in emd(&x).unwrap().imfs {
            if imf.is_converged() {
                prop_assert!(extrema(&imf.values).abs_diff(zero_crossings(&imf.values)) <= 1);
            }
        }
    }

    #[test]
    fn partial_reconstructions_differ_by_the_skipped_imfs(x in series(), k in 1usize..6) {
        let d = emd(&x).unwrap();
        prop_assume!(k <= d.imf_count());
        let all = d.partial_reconstruction(1).unwrap();
        let tail = d.partial_reconstruction(k).unwrap();
        for t in 0..x.len() {
            let head: f64 = d.imfs[..k - 1].iter().map(|imf| imf.values[t]).sum();
            prop_assert!((all[t] - tail[t] - head).abs() < 1e-9);
        }
    }

    #[test]
    fn eemd_is_reproducible(x in series(), seed in any::<u64>()) {
        let cfg = EemdConfig { ensemble_size: 6, seed, ..EemdConfig::default() };
        let a = eemd(&x, &cfg);
        let b = eemd(&x, &cfg);
        let c = eemd(&x, &EemdConfig { execution: Execution::Sequential, ..cfg });
        match (a, b, c) {
            (Ok(a), Ok(b), Ok(c)) => {
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(&a, &c);
            }
            (Err(_), Err(_), Err(_)) => {}
            _ => prop_assert!(false, "runs disagree on success"),
        }
    }
}
