use genbound::info::{BallSearchConfig, Channel, Pmf};
use genbound::learning::Dataset;
use genbound::trajectory::*;
use genbound::Error;

fn quadratic_1d() -> TrajectorySpec {
    TrajectorySpec {
        features: vec![vec![1.0], vec![-0.5]],
        labels: vec![],
        mu: vec![0.5, 0.5],
        loss: LossKind::Quadratic,
        n: 4,
        steps: 40,
        batch: 4,
        init: vec![-3.0],
        weight_decay: 0.0,
        bins: 81,
        range: 4.0,
        window: None,
    }
}

fn toy_dataset(spec: &TrajectorySpec, seed: u64) -> Dataset {
    let mut rng = genbound::rng::from_seed(seed);
    let mu = spec.mu_pmf();
    Dataset::new((0..spec.n).map(|_| mu.sample(&mut rng)).collect()).unwrap()
}

#[test]
fn zero_learning_rate_stays_at_init() {
    let spec = TrajectorySpec::toy_logistic();
    let s = toy_dataset(&spec, 1);
    let traj = simulate_trajectory(&spec, &s, 0.0, 7).unwrap();
    assert_eq!(traj.states.len(), spec.steps + 1);
    assert!(traj.states.iter().all(|w| w == &traj.states[0]));
    assert!(traj.t2 > traj.t1);
}

#[test]
fn same_seed_same_trajectory() {
    let spec = TrajectorySpec::toy_logistic();
    let s = toy_dataset(&spec, 2);
    let a = simulate_trajectory(&spec, &s, 0.8, 11).unwrap();
    let b = simulate_trajectory(&spec, &s, 0.8, 11).unwrap();
    assert_eq!(a, b);
    let c = simulate_trajectory(&spec, &s, 0.8, 12).unwrap();
    assert_ne!(a.cells, c.cells);
}

#[test]
fn states_lie_on_grid() {
    let spec = TrajectorySpec::toy_logistic();
    let grid = spec.grid_values();
    let s = toy_dataset(&spec, 3);
    let traj = simulate_trajectory(&spec, &s, 1.6, 5).unwrap();
    for w in &traj.states {
        for v in w {
            assert!(grid.iter().any(|g| g == v));
        }
    }
}

#[test]
fn quadratic_descent_approaches_minimizer() {
    let spec = quadratic_1d();
    let s = Dataset::new(vec![0, 0, 1, 0]).unwrap();
    let target = (1.0 + 1.0 - 0.5 + 1.0) / 4.0;
    let traj = simulate_trajectory(&spec, &s, 4.0, 0).unwrap();
    let dist: Vec<f64> = traj.states.iter().map(|w| (w[0] - target).abs()).collect();
    for pair in dist.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{dist:?}");
    }
    assert!(dist.last().unwrap() < &dist[0]);
}

#[test]
fn divergence_names_the_step() {
    let spec = quadratic_1d();
    let s = Dataset::new(vec![0, 0, 1, 0]).unwrap();
    match simulate_trajectory(&spec, &s, 200.0, 0) {
        Err(Error::TrajectoryOverflow { step, coordinate, .. }) => {
            assert!(step >= 1);
            assert_eq!(coordinate, 0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn gen_of_constant_trajectory() {
    let spec = TrajectorySpec::toy_logistic();
    let s = toy_dataset(&spec, 4);
    let traj = simulate_trajectory(&spec, &s, 0.0, 0).unwrap();
    let g = gen_trajectory(&spec, &s, &traj);
    assert!((g - spec.gen_error(&s, &spec.init)).abs() < 1e-15);
}

#[test]
fn gen_of_zero_loss_problem() {
    let spec = TrajectorySpec {
        features: vec![vec![0.5], vec![0.5]],
        mu: vec![0.3, 0.7],
        init: vec![0.5],
        ..quadratic_1d()
    };
    let s = Dataset::new(vec![0, 1, 1, 0]).unwrap();
    let traj = simulate_trajectory(&spec, &s, 1.0, 0).unwrap();
    assert_eq!(gen_trajectory(&spec, &s, &traj), 0.0);
}

#[test]
fn gen_matches_naive_recomputation() {
    let spec = TrajectorySpec::toy_logistic();
    for seed in 0..5 {
        let s = toy_dataset(&spec, 10 + seed);
        let traj = simulate_trajectory(&spec, &s, 1.6, seed).unwrap();
        let mut total = 0.0;
        for t in traj.t1..traj.t2 {
            let w = &traj.states[t];
            let mut pop = 0.0;
            for z in 0..spec.z_size() {
                let m = spec.labels[z] * (w[0] * spec.features[z][0] + w[1] * spec.features[z][1]);
                pop += spec.mu[z] / (1.0 + m.exp());
            }
            let mut emp = 0.0;
            for &z in s.samples() {
                let m = spec.labels[z] * (w[0] * spec.features[z][0] + w[1] * spec.features[z][1]);
                emp += 1.0 / (1.0 + m.exp());
            }
            total += pop - emp / s.len() as f64;
        }
        let naive = total / (traj.t2 - traj.t1) as f64;
        let g = gen_trajectory(&spec, &s, &traj);
        assert!((g - naive).abs() <= 1e-12);
        assert!((-1.0..=1.0).contains(&g));
    }
}

#[test]
fn coupling_of_data_independent_channel_is_zero() {
    let out = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
    let pi = Channel::constant(4, &out);
    let p_s = Pmf::uniform(4);
    let est = estimate_m(&pi, &p_s, 1, 0.1, BallSearchConfig::default()).unwrap();
    assert!(est.log_m.abs() < 1e-12);
    assert!(est.plug_in.abs() < 1e-12);
}

#[test]
fn coupling_of_distinct_deterministic_trajectories() {
    for k in [2usize, 3, 5] {
        let pi = Channel::identity(k);
        let p_s = Pmf::uniform(k);
        let est = estimate_m(&pi, &p_s, 0, 0.2, BallSearchConfig::default()).unwrap();
        assert!((est.plug_in - (k as f64).ln()).abs() < 1e-12);
        assert!(est.log_m >= est.plug_in);
    }
}

#[test]
fn coupling_sup_dominates_plug_in() {
    let pi = Channel::new(vec![
        vec![0.7, 0.2, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.3, 0.3, 0.4],
    ])
    .unwrap();
    let p_s = Pmf::new(vec![0.5, 0.3, 0.2]).unwrap();
    for s in 0..3 {
        let est = estimate_m(&pi, &p_s, s, 0.05, BallSearchConfig::default()).unwrap();
        assert!(est.log_m >= est.plug_in);
        assert!(est.plug_in >= 0.0);
    }
}

#[test]
fn spearman_cases() {
    assert_eq!(spearman(&[1.0], &[2.0]), None);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((r - 0.9486832980505138).abs() < 1e-12, "{r}");
}

#[test]
fn single_learning_rate_has_no_correlation() {
    let spec = TrajectorySpec {
        steps: 20,
        ..TrajectorySpec::toy_logistic()
    };
    let table = lr_sweep(&spec, &[0.4], 4, None, 1).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.spearman, None);
}

#[test]
fn identical_trajectories_give_constant_rd() {
    let spec = TrajectorySpec {
        features: vec![vec![0.0, 0.0]; 6],
        steps: 20,
        ..TrajectorySpec::toy_logistic()
    };
    let table = lr_sweep(&spec, &[0.1, 1.0, 5.0], 4, None, 3).unwrap();
    let first = table.rows[0].rd_nats;
    assert!(table.rows.iter().all(|r| r.rd_nats == first && r.flag == SweepFlag::Ok));
}

#[test]
fn diverging_rows_are_flagged() {
    let spec = quadratic_1d();
    let table = lr_sweep(&spec, &[1.0, 2.0, 4.0, 300.0], 6, None, 9).unwrap();
    assert_eq!(table.rows[3].flag, SweepFlag::Diverged);
    assert!(table.rows[..3].iter().all(|r| r.flag == SweepFlag::Ok));
    let csv = table.to_csv();
    assert!(csv.starts_with("lr,mean_gen,rd_nats,flag\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().ends_with(",diverged"));
}

#[test]
fn sweep_rd_curves_are_non_increasing() {
    let spec = TrajectorySpec {
        steps: 40,
        ..TrajectorySpec::toy_logistic()
    };
    let table = lr_sweep(&spec, &[0.4, 3.2], 8, None, 5).unwrap();
    for row in &table.rows {
        for pair in row.rd_curve.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{:?}", row.rd_curve);
        }
    }
    if let Some(r) = table.spearman {
        assert!((-1.0..=1.0).contains(&r));
    }
}

#[test]
fn exact_mode_bounds() {
    let spec = TrajectorySpec {
        n: 2,
        steps: 12,
        ..TrajectorySpec::toy_logistic()
    };
    let a = exact_analysis(&spec, 1.0, 3, 0.02, 0.3, 0.5, BallSearchConfig::default()).unwrap();
    assert!(a.rd_sup >= a.rd_sup_baseline);
    assert!(a.coupling.log_m >= a.coupling.plug_in);
    assert!(a.sup_bound.bound_value.is_finite(), "{a:?}");
    assert!(a.data_bound.bound_value.is_finite());
    assert!((-1.0..=1.0).contains(&a.gen));
}

#[test]
fn spec_json_round_trip_and_strictness() {
    let spec = TrajectorySpec::toy_logistic();
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(TrajectorySpec::from_json(&text).unwrap(), spec);
    let bad = text.replacen("\"steps\"", "\"stepz\"", 1);
    assert!(matches!(TrajectorySpec::from_json(&bad), Err(Error::Config { .. })));
    let mut short = spec.clone();
    short.steps = 1;
    assert!(short.validate().is_err());
}
