use dsmstcn_core::numerics::{
    adam_step, add, conv1x1, dilated_conv1d, relu, softmax_channels, AdamConfig, AdamState, ChannelSequence,
    Gradients, KernelWeights, PointwiseWeights, ParamStore,
};
use proptest::prelude::*;

fn seq(channels: usize, len: usize) -> impl Strategy<Value = ChannelSequence> {
    prop::collection::vec(-5.0f64..5.0, channels * len).prop_map(move |v| ChannelSequence::new(channels, len, v).unwrap())
}

fn shaped() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..4, 1usize..4, 1usize..40)
}

/// Direct triple loop over taps at offsets -d, 0, +d with zero padding.
fn direct_conv(x: &ChannelSequence, out_ch: usize, taps: &[f64], bias: &[f64], d: usize) -> Vec<f64> {
    let (cin, t_len) = (x.channels(), x.len());
    let mut y = vec![0.0; out_ch * t_len];
    for o in 0..out_ch {
        for t in 0..t_len {
            let mut acc = bias[o];
            for i in 0..cin {
                for (k, off) in [-(d as isize), 0, d as isize].into_iter().enumerate() {
                    let s = t as isize + off;
                    if s >= 0 && (s as usize) < t_len {
                        acc += taps[(o * cin + i) * 3 + k] * x.get(i, s as usize);
                    }
                }
            }
            y[o * t_len + t] = acc;
        }
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_columns_are_positive_distributions(x in (2usize..7, 1usize..30).prop_flat_map(|(c, t)| seq(c, t))) {
        let p = softmax_channels(&x).unwrap();
        let s = p.as_sequence();
        for t in 0..s.len() {
            let col = s.column(t);
            prop_assert!(col.iter().all(|&v| v > 0.0));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn dilated_conv_matches_direct_sum_and_keeps_length(
        ((cin, cout, t_len), d) in (shaped(), 1usize..20),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = ChannelSequence::new(cin, t_len, (0..cin * t_len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let taps: Vec<f64> = (0..cout * cin * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = KernelWeights::new(cout, cin, &taps, &bias).unwrap();
        let y = dilated_conv1d(&x, &w, d).unwrap();
        prop_assert_eq!((y.channels(), y.len()), (cout, t_len));
        for (a, b) in y.as_slice().iter().zip(direct_conv(&x, cout, &taps, &bias, d)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_ops_preserve_length((cin, cout, t_len) in shaped(), fill in -2.0f64..2.0) {
        let x = ChannelSequence::filled(cin, t_len, fill);
        let m = vec![0.5; cout * cin];
        let b = vec![0.1; cout];
        let y = conv1x1(&x, &PointwiseWeights::new(cout, cin, &m, &b).unwrap()).unwrap();
        prop_assert_eq!((y.channels(), y.len()), (cout, t_len));
        let r = relu(&y);
        prop_assert!(r.as_slice().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(add(&r, &r).unwrap().len(), t_len);
    }

    #[test]
    fn forward_ops_stay_finite(x in (2usize..4, 1usize..30).prop_flat_map(|(c, t)| seq(c, t))) {
        let c = x.channels();
        let taps = vec![3.0; c * c * 3];
        let bias = vec![-1.0; c];
        let y = dilated_conv1d(&x, &KernelWeights::new(c, c, &taps, &bias).unwrap(), 2).unwrap();
        prop_assert!(y.is_finite());
        prop_assert!(softmax_channels(&relu(&y)).unwrap().as_sequence().is_finite());
    }

    #[test]
    fn adam_counter_and_determinism(g in prop::collection::vec(-3.0f64..3.0, 1..8), steps in 1usize..5) {
        let mut store = ParamStore::new();
        let id = store.insert("w", &[g.len()], vec![0.0; g.len()]).unwrap();
        let mut grads = Gradients::zeros_like(&store);
        grads.by_id_mut(id).copy_from_slice(&g);
        let run = || {
            let mut s = store.clone();
            let mut st = AdamState::new(&s);
            for k in 0..steps {
                prop_assert_eq!(st.step(), k as u64);
                adam_step(&mut s, &grads, &mut st, &AdamConfig::default()).unwrap();
            }
            prop_assert_eq!(st.step(), steps as u64);
            Ok(s)
        };
        let a = run()?;
        let b = run()?;
        prop_assert_eq!(a.data(id), b.data(id));
    }
}

#[test]
fn adam_first_step_hand_value() {
    let mut store = ParamStore::new();
    let id = store.insert("w", &[1], vec![0.0]).unwrap();
    let mut grads = Gradients::zeros_like(&store);
    grads.by_id_mut(id)[0] = 1.0;
    let mut st = AdamState::new(&store);
    assert!(st.first_moment(0).iter().chain(st.second_moment(0)).all(|&m| m == 0.0));
    let hyper = AdamConfig { lr: 0.1, ..AdamConfig::default() };
    adam_step(&mut store, &grads, &mut st, &hyper).unwrap();
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    let expected = -0.1 / (1.0 + 1e-8);
    assert!((store.data(id)[0] - expected).abs() < 1e-15);
}
