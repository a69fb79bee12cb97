mod common;

use fedcast::analysis::{horizon_correlation, pearson, r2_score};
use fedcast::fl::{aggregate_fedavg, aggregate_fedbn};
use fedcast::models::{forward, init_model, Arch};
use fedcast::preprocess::{moving_average, split_train_test, windows_from_columns};
use fedcast::rng::substream;
use fedcast::stream::{
    latency_penalty, perceptible_quality, simulate_session, HarmonicMeanPredictor, OraclePredictor, QoECoefficients,
    StreamConfig,
};
use fedcast::tensor::{Tape, Tensor};
use fedcast::trace::{
    clean_and_resample, export_mapping, export_trace, parse_trace, ClientTrace, RadioType, TraceRecord,
};
use proptest::prelude::*;

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn canonical_trace(n: usize, vals: &[(f64, f64, f64, f64, u8)]) -> ClientTrace {
    let radios = [RadioType::Lte, RadioType::NrNsa, RadioType::NrSa, RadioType::Unknown];
    let records = (0..n)
        .map(|i| {
            let (y, rsrp, sinr, speed, radio) = vals[i];
            let mut r = TraceRecord::new(i as f64, y);
            r.rsrp = rsrp;
            r.sinr = sinr;
            r.speed = speed;
            r.latitude = 44.0 + y / 1000.0;
            r.longitude = -93.0 - rsrp / 1000.0;
            r.radio_type = radios[radio as usize % 4];
            r
        })
        .collect();
    ClientTrace {
        client_id: "c".into(),
        dataset_tag: "tag".into(),
        records,
        sample_period: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn export_then_load_round_trips(
        vals in prop::collection::vec((finite(0.0, 500.0), finite(-140.0, -40.0), finite(-20.0, 40.0), finite(0.0, 40.0), any::<u8>()), 2..40)
    ) {
        let t = canonical_trace(vals.len(), &vals);
        let text = export_trace(&t);
        let back = parse_trace(&text, "c".into(), &export_mapping(&text, "tag")).unwrap();
        prop_assert_eq!(back.dropped, 0);
        prop_assert_eq!(back.trace, t);
    }

    #[test]
    fn resampling_is_idempotent_with_constant_step(
        steps in prop::collection::vec(0u32..6, 2..60),
        ys in prop::collection::vec(finite(0.0, 100.0), 60),
    ) {
        let mut t = 0u32;
        let records: Vec<TraceRecord> = steps
            .iter()
            .zip(&ys)
            .map(|(s, y)| {
                t += s;
                TraceRecord::new(t as f64, *y)
            })
            .collect();
        let trace = ClientTrace { client_id: "x".into(), dataset_tag: String::new(), records, sample_period: 1.0 };
        if let Ok(once) = clean_and_resample(&trace) {
            let ts: Vec<f64> = once.records.iter().map(|r| r.timestamp).collect();
            for (i, v) in ts.iter().enumerate() {
                prop_assert_eq!(*v, i as f64 * once.sample_period);
            }
            prop_assert!(once.records.iter().all(|r| r.throughput >= 0.0 && r.throughput.is_finite()));
            let twice = clean_and_resample(&once).unwrap();
            prop_assert_eq!(twice, once);
        }
    }

    #[test]
    fn moving_average_matches_direct_mean_and_scales(
        xs in prop::collection::vec(finite(-50.0, 50.0), 1..80),
        w in 1usize..8,
        c in finite(0.01, 100.0),
    ) {
        let ma = moving_average(&xs, w).unwrap();
        prop_assert_eq!(ma.len(), xs.len());
        for i in 0..xs.len() {
            let lo = (i + 1).saturating_sub(w);
            let direct = xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            prop_assert!((ma[i] - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        }
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        for (a, b) in moving_average(&scaled, w).unwrap().iter().zip(&ma) {
            prop_assert!((a - c * b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn windows_reconstruct_from_index_arithmetic(
        n in 3usize..120, h in 1usize..20, f in 1usize..6, stride in 1usize..5,
    ) {
        let tput: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let feat: Vec<Vec<f64>> = (0..2).map(|k| (0..n).map(|i| (1000 * (k + 1) + i) as f64).collect()).collect();
        let res = windows_from_columns(&feat, &tput, h, f, stride);
        if n < h + f + 1 {
            prop_assert!(res.is_err());
            return Ok(());
        }
        let ws = res.unwrap();
        let expected: Vec<usize> = (h..n).step_by(stride).filter(|a| a + f < n).collect();
        prop_assert_eq!(ws.iter().map(|w| w.anchor).collect::<Vec<_>>(), expected);
        for w in &ws {
            for j in 0..=h {
                let t = w.anchor - h + j;
                prop_assert_eq!(w.thpt_history[j], tput[t]);
                for k in 0..2 {
                    prop_assert_eq!(w.feature(k, j), feat[k][t]);
                }
            }
            for (i, y) in w.target.iter().enumerate() {
                prop_assert_eq!(*y, tput[w.anchor + 1 + i]);
            }
        }
    }

    #[test]
    fn split_is_chronological(n in 2usize..300, ratio in 0.05f64..0.95) {
        let items: Vec<usize> = (0..n).collect();
        let (train, test) = split_train_test(&items, ratio).unwrap();
        prop_assert_eq!(train.len(), (ratio * n as f64).floor() as usize);
        prop_assert_eq!(train.len() + test.len(), n);
        if let (Some(a), Some(b)) = (train.last(), test.first()) {
            prop_assert!(a < b);
        }
    }

    #[test]
    fn gradients_are_linear_and_unused_params_get_zero(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = substream(seed, "prop", &[]);
        let mut m = |r, c| Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (x0, w0, v0, u0) = (m(3, 4), m(4, 2), m(4, 2), m(2, 2));
        let grads = |which: u8| {
            let mut tape = Tape::new();
            let x = tape.constant(x0.clone());
            let w = tape.param(w0.clone());
            let v = tape.param(v0.clone());
            let unused = tape.param(u0.clone());
            let a = tape.matmul(x, w).unwrap();
            let a = tape.tanh(a);
            let l1 = tape.mean(a);
            let b = tape.matmul(x, v).unwrap();
            let b = tape.sigmoid(b);
            let b = tape.mul(b, a).unwrap();
            let l2 = tape.sum(b);
            let loss = match which {
                1 => l1,
                2 => l2,
                _ => tape.add(l1, l2).unwrap(),
            };
            tape.backward(loss).unwrap();
            (tape.grad(w).unwrap(), tape.grad(v).unwrap(), tape.grad(unused).unwrap())
        };
        let (w1, v1, _) = grads(1);
        let (w2, v2, _) = grads(2);
        let (w3, v3, u3) = grads(3);
        for ((a, b), c) in w1.data().iter().zip(w2.data()).zip(w3.data()) {
            prop_assert!((a + b - c).abs() < 1e-12);
        }
        for ((a, b), c) in v1.data().iter().zip(v2.data()).zip(v3.data()) {
            prop_assert!((a + b - c).abs() < 1e-12);
        }
        prop_assert!(u3.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn r2_is_affine_invariant_and_pearson_bounded(
        ys in prop::collection::vec(finite(-10.0, 10.0), 3..50),
        noise in prop::collection::vec(finite(-1.0, 1.0), 50),
        a in finite(-5.0, 5.0),
        b in finite(0.1, 10.0),
    ) {
        let yhat: Vec<f64> = ys.iter().zip(&noise).map(|(y, e)| y + e).collect();
        let Ok(r) = r2_score(&ys, &yhat) else { return Ok(()) };
        prop_assert!(r <= 1.0);
        let t = |v: &[f64]| v.iter().map(|x| a + b * x).collect::<Vec<_>>();
        let r2 = r2_score(&t(&ys), &t(&yhat)).unwrap();
        prop_assert!((r - r2).abs() < 1e-9 * (1.0 + r.abs()));
        if let Ok(rho) = pearson(&ys, &yhat) {
            prop_assert!((-1.0..=1.0).contains(&rho));
        }
    }

    #[test]
    fn horizon_correlation_is_bounded(vals in prop::collection::vec((finite(0.0, 500.0), finite(-140.0, -40.0), finite(-20.0, 40.0), finite(0.0, 40.0), any::<u8>()), 8..40), h in 0usize..4) {
        let t = canonical_trace(vals.len(), &vals);
        for f in ["throughput", "rsrp", "sinr", "speed"] {
            if let Ok(r) = horizon_correlation(&t, f, h) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn fedavg_hull_identity_and_zero_weight(seed in any::<u64>(), k in 1usize..6) {
        use rand::Rng;
        let mut rng = substream(seed, "prop", &[]);
        let layout = common::mixed_layout();
        let sets: Vec<_> = (0..k).map(|_| common::random_params(&layout, &mut rng)).collect();
        let ns: Vec<usize> = (0..k).map(|_| rng.random_range(1..100)).collect();
        let updates: Vec<_> = sets.iter().zip(&ns).map(|(p, n)| (p, *n)).collect();
        let avg = aggregate_fedavg(&updates).unwrap();
        for (i, e) in avg.iter().enumerate() {
            for (j, v) in e.tensor.data().iter().enumerate() {
                let col = sets.iter().map(|s| s.entries()[i].tensor.data()[j]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
        let same: Vec<_> = ns.iter().map(|n| (&sets[0], *n)).collect();
        let id = aggregate_fedavg(&same).unwrap();
        for (a, b) in id.iter().zip(sets[0].iter()) {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                prop_assert!((x - y).abs() <= 1e-15 * (1.0 + y.abs()));
            }
        }
        let extra = common::random_params(&layout, &mut rng);
        let mut with_zero = updates.clone();
        with_zero.push((&extra, 0));
        prop_assert_eq!(aggregate_fedavg(&with_zero).unwrap(), avg);

        let bn = aggregate_fedbn(&updates).unwrap();
        for (own, out) in sets.iter().zip(&bn.clients) {
            for (a, b) in own.iter().zip(out.iter()) {
                if a.is_batchnorm {
                    prop_assert_eq!(&a.tensor, &b.tensor);
                }
            }
        }
    }

    #[test]
    fn quality_and_latency_penalty_are_monotone(r in 300.0f64..10000.0, dr in 0.001f64..1000.0, l in 0.0f64..30.0, dl in 0.001f64..5.0, omega in 0.0f64..10.0) {
        prop_assert!(perceptible_quality(r + dr, 300.0).unwrap() > perceptible_quality(r, 300.0).unwrap());
        let (a, b) = (latency_penalty(l, omega), latency_penalty(l + dl, omega));
        prop_assert!(b >= a);
        let cap = 1.0 - 1.0 / (1.0 + omega.exp());
        prop_assert!(a >= 0.0 && b <= cap + 1e-15);
        prop_assert_eq!(latency_penalty(0.0, omega), 0.0);
    }
}

fn step_trace(seed: u64, len: usize) -> Vec<f64> {
    use rand::Rng;
    let mut rng = substream(seed, "steps", &[]);
    let mut out = Vec::with_capacity(len);
    let mut level: f64 = rng.random_range(0.2..10.0);
    for i in 0..len {
        if i % 7 == 0 && rng.random_bool(0.5) {
            level = rng.random_range(0.0..10.0);
        }
        out.push(level);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn session_identities(seed in any::<u64>(), rtt in 0.0f64..0.15) {
        let cfg = StreamConfig { session_len: 30.0, rtt_overhead: rtt, ..Default::default() };
        let coeffs = QoECoefficients::default();
        let trace = step_trace(seed, 30);
        for r in [
            simulate_session(&trace, &mut OraclePredictor, &cfg, &coeffs).unwrap(),
            simulate_session(&trace, &mut HarmonicMeanPredictor::default(), &cfg, &coeffs).unwrap(),
        ] {
            let b = &r.breakdown;
            let recomposed = coeffs.mu1 * b.quality - coeffs.mu2 * b.stall - coeffs.mu3 * b.switch
                - coeffs.mu4 * b.latency - coeffs.mu5 * b.skip;
            prop_assert!((recomposed - b.qoe).abs() < 1e-9);
            prop_assert!(r.chunk_rates.iter().all(|x| cfg.ladder.contains(x)));
            let tot = &r.totals;
            if let Some(start) = tot.startup_time {
                let elapsed = tot.end_time - start;
                prop_assert!((tot.played + tot.stall - elapsed).abs() <= cfg.chunk_len());
                prop_assert!((tot.final_position - (tot.played + tot.skipped)).abs() < 1e-9);
            }
            prop_assert!(tot.stall >= 0.0 && tot.skipped >= 0.0);
        }
    }

    #[test]
    fn oracle_never_exceeds_a_matching_constant_rung(j in 0usize..6) {
        let cfg = StreamConfig { session_len: 20.0, ..Default::default() };
        let trace = vec![cfg.ladder[j] / 1000.0; 20];
        let r = simulate_session(&trace, &mut OraclePredictor, &cfg, &QoECoefficients::default()).unwrap();
        let start = r.totals.startup_time.map_or(usize::MAX, |t| {
            r.events.iter().filter(|e| e.kind == fedcast::stream::EventKind::DownloadDone && e.time <= t).count()
        });
        for rate in r.chunk_rates.iter().skip(start) {
            prop_assert!(*rate <= cfg.ladder[j], "{} > {}", rate, cfg.ladder[j]);
        }
    }

    #[test]
    fn eval_forward_is_deterministic(seed in 0u64..1000, arch in 0usize..4) {
        let spec = common::toy_spec(Arch::ALL[arch]);
        let p = init_model(&spec, seed).unwrap();
        let batch = common::toy_batch(&spec, 3, seed);
        prop_assert_eq!(forward(&spec, &p, &batch).unwrap(), forward(&spec, &p, &batch).unwrap());
    }
}
