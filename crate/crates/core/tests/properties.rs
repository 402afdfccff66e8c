use mno_core::analysis::{autocorrelation, wasserstein1, Histogram, Trajectory, TrajectoryMeta};
use mno_core::dissipativity::{blend, rho, PostProcessConfig};
use mno_core::io::{self, Checkpoint, DataFile, StateInfo};
use mno_core::model::{Architecture, FfnArchitecture, FnoArchitecture, Model};
use mno_core::spectral::{sobolev_norm, Domain, GridField, SpectralField, Transform};
use mno_core::systems::{DatasetMeta, PairDataset, SystemKind};
use proptest::prelude::*;

fn domain() -> impl Strategy<Value = Domain> {
    prop_oneof![
        (
            prop::sample::select(vec![4usize, 6, 8, 16, 30]),
            0.5f64..100.0
        )
            .prop_map(|(n, l)| Domain::line(n, l)),
        prop::sample::select(vec![4usize, 6, 8, 12]).prop_map(Domain::square),
    ]
}

fn field() -> impl Strategy<Value = GridField> {
    domain().prop_flat_map(|d| {
        prop::collection::vec(-10.0f64..10.0, d.points())
            .prop_map(move |v| GridField::new(d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(f in field()) {
        let t = Transform::new(f.domain);
        let s = SpectralField { domain: f.domain, coeffs: t.forward(&f.values) };
        let ms = f.rms().powi(2);
        prop_assert!((s.energy() - ms).abs() <= 1e-12 * ms.max(1.0));
    }

    #[test]
    fn fft_round_trip(f in field()) {
        let t = Transform::new(f.domain);
        let back = t.inverse(&t.forward(&f.values));
        let scale = f.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in back.iter().zip(&f.values) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn sobolev_norms_increase_with_order(f in field()) {
        let n0 = sobolev_norm(&f, 0);
        prop_assert!((n0 - f.rms()).abs() <= 1e-12 * n0.max(1.0));
        let n1 = sobolev_norm(&f, 1);
        let n2 = sobolev_norm(&f, 2);
        prop_assert!(n0 <= n1 * (1.0 + 1e-14) && n1 <= n2 * (1.0 + 1e-14));
    }

    #[test]
    fn rho_is_a_decreasing_weight(a in 1.0f64..1e3, b in 1e-3f64..10.0, r1 in 0.0f64..1e4, r2 in 0.0f64..1e4) {
        let c = PostProcessConfig::new(a, b, 0.5);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let (x, y) = (rho(lo, &c), rho(hi, &c));
        prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        prop_assert!(x >= y);
    }

    #[test]
    fn blend_identity(
        u in prop::collection::vec(-500.0f64..500.0, 3),
        out in prop::collection::vec(-500.0f64..500.0, 3),
        lambda in 0.01f64..0.99,
    ) {
        let c = PostProcessConfig::new(100.0, 0.1, lambda);
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let b = blend(&u, &out, n, &c);
        let r = rho(n, &c);
        for i in 0..3 {
            let lhs = b[i] - lambda * u[i];
            let rhs = r * (out[i] - lambda * u[i]);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + out[i].abs() + u[i].abs()));
        }
    }

    #[test]
    fn pairs_round_trip_bit_exact(
        bits in prop::collection::vec(any::<u64>(), 1..40),
        n in 1usize..4,
        seed in any::<u64>(),
    ) {
        let k = bits.len() / (2 * n);
        prop_assume!(k > 0);
        let vals: Vec<f64> = bits.iter().take(2 * n * k).map(|b| f64::from_bits(*b)).collect();
        let meta = DatasetMeta {
            system: SystemKind::Lorenz,
            grid_shape: vec![n],
            domain_length: 0.0,
            dt: 0.01,
            h: 0.05,
            seed,
            n_trajectories: 1,
            provenance: "prop".into(),
        };
        let data = PairDataset::new(meta, n, vals[..n * k].to_vec(), vals[n * k..].to_vec()).unwrap();
        let bytes = io::encode_pairs(&data);
        match io::decode_data(&bytes).unwrap() {
            DataFile::Pairs(back) => {
                prop_assert_eq!(io::encode_pairs(&back), bytes);
                prop_assert_eq!(back.meta, data.meta);
            }
            DataFile::Trajectory(_) => prop_assert!(false, "layout changed"),
        }
    }

    #[test]
    fn trajectory_round_trip_bit_exact(vals in prop::collection::vec(-1e6f64..1e6, 1..12), h in 1e-3f64..10.0, seed in any::<u64>()) {
        let meta = TrajectoryMeta {
            system: Some(SystemKind::Lorenz),
            grid_shape: vec![1],
            domain_length: 0.0,
            h,
            seed,
            provenance: "prop".into(),
        };
        let t = Trajectory::new(meta, vals).unwrap();
        let bytes = io::encode_trajectory(&t);
        match io::decode_data(&bytes).unwrap() {
            DataFile::Trajectory(back) => {
                prop_assert_eq!(&back, &t);
                prop_assert_eq!(io::encode_trajectory(&back), bytes);
            }
            DataFile::Pairs(_) => prop_assert!(false, "layout changed"),
        }
    }

    #[test]
    fn checkpoint_round_trip_bit_exact(seed in any::<u64>(), fno in any::<bool>(), max_norm in 1e-3f64..1e3) {
        let (arch, state) = if fno {
            (
                Architecture::Fno(FnoArchitecture::new(1, 3, 2, 1)),
                StateInfo { system: Some(SystemKind::Ks), grid_shape: vec![8], domain_length: 22.0, h: 1.0 },
            )
        } else {
            (
                Architecture::Ffn(FfnArchitecture::new(3, 3, 2, 5)),
                StateInfo { system: Some(SystemKind::Lorenz), grid_shape: vec![3], domain_length: 0.0, h: 0.05 },
            )
        };
        let model = Model::init(arch, seed).unwrap();
        let ck = Checkpoint {
            model,
            state,
            training: None,
            postprocess: Some(PostProcessConfig::from_training_norm(max_norm)),
            experiment: None,
        };
        let bytes = io::encode_checkpoint(&ck);
        let back = io::decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(io::encode_checkpoint(&back), bytes);
        let u: Vec<f64> = (0..ck.state.grid_shape[0]).map(|i| (i as f64 * 0.7).sin()).collect();
        let (a, b) = (ck.model.apply(&u).unwrap(), back.model.apply(&u).unwrap());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn decoders_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = io::decode_data(&bytes);
        let _ = io::decode_checkpoint(&bytes);
    }

    #[test]
    fn truncated_or_flipped_files_are_rejected_or_decoded(cut in 0usize..400, flip in 0usize..400, bit in 0u8..8) {
        let meta = TrajectoryMeta {
            system: Some(SystemKind::Lorenz),
            grid_shape: vec![3],
            domain_length: 0.0,
            h: 0.05,
            seed: 1,
            provenance: "x".into(),
        };
        let t = Trajectory::new(meta, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = io::encode_trajectory(&t);
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(io::decode_data(&bytes[..cut]).is_err());
        let mut m = bytes.clone();
        let i = flip % m.len();
        m[i] ^= 1 << bit;
        let _ = io::decode_data(&m);
    }

    #[test]
    fn wasserstein_properties(a in prop::collection::vec(-50.0f64..50.0, 1..30), b in prop::collection::vec(-50.0f64..50.0, 1..30), c in -10.0f64..10.0) {
        prop_assert_eq!(wasserstein1(&a, &a), 0.0);
        let ab = wasserstein1(&a, &b);
        prop_assert!((ab - wasserstein1(&b, &a)).abs() <= 1e-12 * (1.0 + ab));
        let shifted: Vec<f64> = a.iter().map(|x| x + c).collect();
        prop_assert!((wasserstein1(&a, &shifted) - c.abs()).abs() <= 1e-9);
    }

    #[test]
    fn histogram_counts_every_sample(vals in prop::collection::vec(-100.0f64..100.0, 0..200), bins in 2usize..50) {
        let mut h = Histogram::new(bins, (-20.0, 20.0)).unwrap();
        for v in &vals {
            h.add(*v);
        }
        prop_assert_eq!(h.total() as usize, vals.len());
        prop_assert_eq!(h.counts.len(), bins);
        if !vals.is_empty() {
            let width = 40.0 / bins as f64;
            let mass: f64 = h.density().iter().map(|d| d * width).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn autocorrelation_is_normalized(series in prop::collection::vec(-10.0f64..10.0, 3..80)) {
        let acf = autocorrelation(&series, series.len() - 1).unwrap();
        if !acf.degenerate {
            prop_assert!((acf.values[0] - 1.0).abs() < 1e-12);
            prop_assert!(acf.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn model_init_is_deterministic(seed in any::<u64>()) {
        let arch = Architecture::Fno(FnoArchitecture::new(2, 2, 2, 1));
        let a = Model::init(arch.clone(), seed).unwrap();
        let b = Model::init(arch, seed).unwrap();
        prop_assert_eq!(a.params.blocks, b.params.blocks);
    }
}
