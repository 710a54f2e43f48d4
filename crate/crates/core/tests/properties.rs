use hvac_mpc::dataio::{window, Dims};
use hvac_mpc::diff::{grad_check, Tape, Tensor, Var};
use hvac_mpc::kpi::{discomfort, energy};
use hvac_mpc::plant::{step, ComfortSchedule, ControlBox, Disturbance, PlantState};
use hvac_mpc::surrogate::Architecture;
use hvac_mpc::*;
use proptest::prelude::*;

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| Tensor::new(rows, cols, v).unwrap())
}

fn check(f: impl Fn(&mut Tape, Var) -> Result<Var, hvac_mpc::diff::DiffError>, x: &Tensor) -> f64 {
    grad_check(f, x, 1e-6).unwrap()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn smooth_primitives_match_finite_differences(x in tensor(2, 3), w in tensor(3, 2)) {
        let err = check(
            |t, v| {
                let w = t.constant(w.clone());
                let a = t.matmul(v, w)?;
                let a = t.tanh(a);
                let b = t.sigmoid(v);
                let b = t.sum_rows(b);
                let c = t.hadamard(v, v)?;
                let c = t.scalar_mul(c, 0.3);
                let c = t.add_scalar(c, 1.0);
                let s = t.slice(c, 1, 3)?;
                let r = t.slice_rows(v, 0, 1)?;
                let cat = t.concat(&[a, b])?;
                let parts = [t.mean(cat), t.sum(s), t.sum(r)];
                let mut acc = t.square(parts[0]);
                for p in &parts[1..] {
                    acc = t.add(acc, *p)?;
                }
                let half = t.scalar_mul(acc, 0.5);
                Ok(t.sub(acc, half)?)
            },
            &x,
        );
        prop_assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn mse_and_relu_match_away_from_kinks(x in tensor(3, 2), y in tensor(3, 2)) {
        prop_assume!(x.data().iter().all(|v| v.abs() > 1e-3));
        let err = check(
            |t, v| {
                let y = t.constant(y.clone());
                let m = t.mse(v, y)?;
                let r = t.relu(v);
                let r = t.sum(r);
                Ok(t.add(m, r)?)
            },
            &x,
        );
        prop_assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn lstm_gates_stay_in_range(
        seed in 0u64..1000,
        u in prop::collection::vec(-5.0..5.0f64, 2),
        h in prop::collection::vec(-1.0..1.0f64, 4),
        c in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        let arch = Architecture { width: 6, depth: 2, hidden: 4, ..Architecture::desk() };
        let dims = Dims { n_x: 4, n_u: 2, n_d: 3 };
        let m = SurrogateModel::new(ModelKind::Lstm, LagSpec::new(1, 1, 1), dims, Normalizer::identity(4, 2, 3), arch, seed).unwrap();
        let s = m.lstm_cell(&u, &h, &c).unwrap();
        for gate in [&s.i, &s.f, &s.o] {
            prop_assert!(gate.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        prop_assert!(s.g.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(s.h.iter().all(|v| (-1.0..=1.0).contains(v)));
        for k in 0..4 {
            let want = s.f[k] * c[k] + s.i[k] * s.g[k];
            prop_assert!((s.c[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn window_sample_count(len in 0usize..40, mx in 0usize..6, mu in 0usize..6, md in 0usize..6) {
        let mut tr = Trajectory::default();
        for k in 0..len {
            tr.push(vec![k as f64, 0.0], vec![0.5], vec![1.0, 2.0, 3.0], k as f64 * 900.0);
        }
        let lags = LagSpec::new(mx, mu, md);
        let ds = window(&tr, lags);
        let m = lags.max();
        let want = if len >= m + 2 { len - m - 1 } else { 0 };
        prop_assert_eq!(ds.len(), want);
        for (inp, tgt) in ds.inputs.iter().zip(&ds.targets) {
            prop_assert_eq!(inp.len(), lags.input_width(Dims { n_x: 2, n_u: 1, n_d: 3 }));
            // most recent state sits at the end of the x block, target one step later
            prop_assert_eq!(tgt[0], inp[mx * 2] + 1.0);
        }
    }

    #[test]
    fn normalizer_round_trip(rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..30)) {
        let mut tr = Trajectory::default();
        for (k, r) in rows.iter().enumerate() {
            tr.push(r.clone(), vec![r[0], 1.0], vec![r[1], r[2], 0.0], k as f64);
        }
        let n = Normalizer::fit(std::slice::from_ref(&tr)).unwrap();
        for r in &rows {
            let back = n.x.invert(&n.x.apply(r));
            for (a, b) in back.iter().zip(r) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
        // constant channel is flagged and passes through shifted only
        prop_assert!(n.u.flagged[1]);
        prop_assert_eq!(n.u.apply(&[0.0, 1.0])[1], 0.0);
    }

    #[test]
    fn clamp_is_idempotent_projection(u in prop::collection::vec(-20.0..60.0f64, 12)) {
        let bx = ControlBox::for_plant(&PlantConfig::five_zone());
        let c = bx.clamp(&u);
        prop_assert!(bx.contains(&c));
        prop_assert_eq!(bx.clamp(&c), c.clone());
        for ((a, b), (lo, hi)) in u.iter().zip(&c).zip(bx.lower.iter().zip(&bx.upper)) {
            if (lo..=hi).contains(&a) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn plant_power_within_capacity(
        five in any::<bool>(),
        seed in 0u64..500,
        t0 in 10.0..30.0f64,
        amb in -20.0..40.0f64,
        solar in 0.0..800.0f64,
    ) {
        use rand::{Rng, SeedableRng};
        let config = if five { PlantConfig::five_zone() } else { PlantConfig::single_zone() };
        let bx = ControlBox::for_plant(&config);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = PlantState::initial(&config, t0);
        let d = Disturbance { ambient_temperature: amb, solar_gain: solar, occupancy: 2.0 };
        for _ in 0..8 {
            let u: Vec<f64> = bx.lower.iter().zip(&bx.upper).map(|(&l, &h)| rng.random_range(l..=h)).collect();
            let (n, m) = step(&s, &u, &d, &config).unwrap();
            prop_assert!(m.heating_power >= 0.0 && m.heating_power <= config.heating_capacity_total() / 1000.0 + 1e-12);
            prop_assert!(m.cooling_power >= 0.0 && m.cooling_power <= config.cooling_capacity_total() / 1000.0 + 1e-12);
            prop_assert!(m.fan_power >= 0.0);
            prop_assert!(n.zone_temperatures.iter().all(|t| t.is_finite()));
            s = n;
        }
    }

    #[test]
    fn kpis_nonnegative_and_additive(
        temps in prop::collection::vec(10.0..35.0f64, 2..40),
        power in prop::collection::vec(0.0..5.0f64, 40),
        split in 1usize..39,
    ) {
        let c = ComfortSchedule::always_occupied();
        let mut tr = Trajectory::default();
        for (k, &t) in temps.iter().enumerate() {
            tr.push(vec![t, power[k], 0.5 * power[k], 0.1], vec![0.0, 0.0], vec![0.0; 3], k as f64 * 900.0);
        }
        let e = energy(&tr, &[1, 2, 3], 48.0).unwrap();
        let dc = discomfort(&tr, 1, &c);
        prop_assert!(e >= 0.0 && dc >= 0.0);
        // uniform sampling: any split that leaves two samples each side adds up
        let split = split.min(tr.len().saturating_sub(2));
        prop_assume!(split >= 2);
        let (a, b) = (tr.slice(0, split), tr.slice(split, tr.len()));
        prop_assume!(b.len() >= 2);
        let sum = energy(&a, &[1, 2, 3], 48.0).unwrap() + energy(&b, &[1, 2, 3], 48.0).unwrap();
        prop_assert!((sum - e).abs() < 1e-9);
        let dsum = discomfort(&a, 1, &c) + discomfort(&b, 1, &c);
        prop_assert!((dsum - dc).abs() < 1e-9);
    }
}
