mod common;

use dclm::data::idx::{decode_idx, IMAGES_MAGIC};
use dclm::data::{images_to_idx, labels_to_idx, parse_idx, sample_subset, LabeledImage};
use dclm::divergence::{js, js_distributions, js_lower_bound, normalize_values};
use dclm::game::phi_d_game;
use dclm::logic::{solve, t_norm, LogicOp, LogicProblem, SolveConfig, TNorm};
use dclm::nn::conv2d;
use dclm::perception::FeatureMap;
use dclm::Tensor;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn map(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64], len)
}

proptest! {
    #[test]
    fn conv_is_linear_in_the_input(
        a in prop::collection::vec(-1.0..1.0f64, 2 * 5 * 5),
        b in prop::collection::vec(-1.0..1.0f64, 2 * 5 * 5),
        k in prop::collection::vec(-1.0..1.0f64, 3 * 2 * 3 * 3),
        s in -2.0..2.0f64,
    ) {
        let kernels = Tensor::new(vec![3, 2, 3, 3], k).unwrap();
        let zero = [0.0; 3];
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let conv = |v: Vec<f64>| conv2d(&Tensor::new(vec![2, 5, 5], v).unwrap(), &kernels, &zero).unwrap();
        let lhs = conv(mix);
        let (ca, cb) = (conv(a), conv(b));
        for ((l, x), y) in lhs.data().iter().zip(ca.data()).zip(cb.data()) {
            prop_assert!((l - (x + s * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn js_is_bounded_symmetric_and_above_pinsker(a in map(9), b in map(9)) {
        let fa = FeatureMap::new(0, 3, 3, a.clone()).unwrap();
        let fb = FeatureMap::new(0, 3, 3, b.clone()).unwrap();
        let ab = js(&fa, &fb, 1e-9).unwrap();
        let ba = js(&fb, &fa, 1e-9).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(js(&fa, &fa, 1e-9).unwrap() <= 1e-9);
        let (p, q) = (normalize_values(&a, 1e-9).unwrap(), normalize_values(&b, 1e-9).unwrap());
        prop_assert!(js_lower_bound(&p, &q) <= js_distributions(&p, &q).unwrap() + 1e-12);
    }

    #[test]
    fn tnorm_axioms(a in unit(), b in unit(), c in unit()) {
        for v in TNorm::ALL {
            let and = |x, y| t_norm(v, LogicOp::And, x, Some(y)).unwrap();
            let or = |x, y| t_norm(v, LogicOp::Or, x, Some(y)).unwrap();
            prop_assert!((and(a, b) - and(b, a)).abs() < 1e-12);
            prop_assert!((and(and(a, b), c) - and(a, and(b, c))).abs() < 1e-12);
            prop_assert!((and(a, 1.0) - a).abs() < 1e-12);
            prop_assert!((or(a, 0.0) - a).abs() < 1e-12);
            if a <= b {
                prop_assert!(and(a, c) <= and(b, c) + 1e-12);
            }
            for x in [and(a, b), or(a, b), t_norm(v, LogicOp::Implies, a, Some(b)).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn solver_is_monotone_and_stays_in_the_box(seed in any::<u64>()) {
        let inst = common::logic_instance(seed);
        let problem = LogicProblem::new(&inst.net, &inst.grounding);
        let mut gamma = inst.net.gamma().to_vec();
        let sol = solve(&problem, &mut gamma, &inst.lambda, &inst.f, &SolveConfig::default()).unwrap();
        prop_assert!(sol.trace.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(gamma.iter().all(|g| (-1.0..=1.0).contains(g)));
        prop_assert!(sol.y.iter().all(|y| (0.0..=1.0).contains(y)));
    }

    #[test]
    fn phi_d_ignores_common_shifts(
        y in prop::collection::vec(0.0..1.0f64, 10),
        f in prop::collection::vec(-1.0..2.0f64, 10),
        shift in -3.0..3.0f64,
    ) {
        let shifted: Vec<f64> = f.iter().map(|v| v + shift).collect();
        let a = phi_d_game(&y, &f).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - phi_d_game(&y, &shifted).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn idx_bytes_round_trip(pixels in prop::collection::vec(any::<u8>(), 3 * 4 * 2), labels in prop::collection::vec(0u8..10, 3)) {
        let images: Vec<LabeledImage> = (0..3)
            .map(|i| {
                let px = pixels[i * 8..(i + 1) * 8].iter().map(|&p| p as f64 / 255.0).collect();
                LabeledImage::new(Tensor::new(vec![1, 4, 2], px).unwrap(), labels[i] as usize, i).unwrap()
            })
            .collect();
        let bytes = images_to_idx(&images).unwrap();
        let (dims, payload) = parse_idx(&bytes, IMAGES_MAGIC).unwrap();
        prop_assert_eq!(dims, vec![3, 4, 2]);
        prop_assert_eq!(payload, &pixels[..]);
        let back = decode_idx(&bytes, &labels_to_idx(&images)).unwrap();
        prop_assert_eq!(back, images);
    }

    #[test]
    fn subsets_are_reproducible(seed in any::<u64>(), n in 0usize..50) {
        let data: Vec<usize> = (0..50).collect();
        let a = sample_subset(&data, n, seed).unwrap();
        prop_assert_eq!(&a, &sample_subset(&data, n, seed).unwrap());
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
    }
}
