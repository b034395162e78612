mod common;

use common::*;
use lagp::local::{local_design_in_pool, pool_theta0};
use lagp::synth::{lhs_sample, rng, LhsSpec};
use lagp::*;
use rand::Rng;

fn full_sort(d: &Design, x: &[f64], m: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..d.len())
        .map(|i| {
            let dist: f64 = d.row(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(m).map(|(_, i)| i).collect()
}

#[test]
fn neighbours_match_full_sort() {
    let d = random_design(1, 1000, 8);
    let tree = KdTree::new(&d);
    let mut r = rng(2);
    for _ in 0..20 {
        let x: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
        let expect = full_sort(&d, &x, 100);
        assert_eq!(nearest_neighbors(&d, &x, 100).unwrap(), expect);
        assert_eq!(tree.nearest(&x, 100).unwrap(), expect);
    }
}

#[test]
fn neighbours_on_a_grid_with_ties() {
    let mut x = Vec::new();
    for i in 0..30 {
        for j in 0..30 {
            x.extend([i as f64, j as f64]);
        }
    }
    let d = Design::new(x, 2, vec![0.0; 900]).unwrap();
    let tree = KdTree::new(&d);
    for q in [[10.0, 10.0], [10.5, 10.5], [0.0, 29.0], [15.5, 3.0]] {
        for m in [1, 4, 9, 37, 900] {
            let expect = full_sort(&d, &q, m);
            assert_eq!(nearest_neighbors(&d, &q, m).unwrap(), expect);
            assert_eq!(tree.nearest(&q, m).unwrap(), expect);
        }
    }
}

#[test]
fn nn_method_takes_the_neighbours() {
    let d = random_design(3, 300, 3);
    let x = [0.4, 0.5, 0.6];
    let params = LocalDesignParams {
        method: Method::Nn,
        ..LocalDesignParams::with_defaults(10, 300)
    };
    let st = local_design(&d, &x, &params, 0.2).unwrap();
    assert_eq!(st.chosen_indices(), &full_sort(&d, &x, 10)[..]);
}

#[test]
fn alc_reaches_past_the_neighbour_ring() {
    // 200 x 200 grid on the unit square
    let side = 200;
    let mut x = Vec::with_capacity(side * side * 2);
    for i in 0..side {
        for j in 0..side {
            x.extend([i as f64 / (side - 1) as f64, j as f64 / (side - 1) as f64]);
        }
    }
    let d = Design::new(x, 2, vec![0.0; side * side]).unwrap();
    let x_ref = [0.5012, 0.4987];
    let params = LocalDesignParams {
        n0: 6,
        n: 50,
        n_close: 1000,
        ..LocalDesignParams::with_defaults(50, d.len())
    };
    let pool = KdTree::new(&d).nearest(&x_ref, 1000).unwrap();
    let theta = pool_theta0(&d, &x_ref, &pool);
    let st = local_design(&d, &x_ref, &params, theta).unwrap();
    let ring: std::collections::HashSet<usize> = pool[..50].iter().copied().collect();
    let outside = st.chosen_indices().iter().filter(|i| !ring.contains(i)).count();
    assert!(outside >= 1, "all 50 chosen points are nearest neighbours");
    assert!(st.chosen_indices().iter().all(|i| pool.contains(i)));
}

#[test]
fn greedy_path_matches_brute_force() {
    for seed in 0..5u64 {
        let d = random_design(40 + seed, 30, 2);
        let x_ref = [0.45, 0.55];
        let params = LocalDesignParams {
            n0: 6,
            n: 8,
            ..LocalDesignParams::with_defaults(8, 30)
        };
        let theta = 0.05;
        let h = Hyperparameters::new(theta, params.eta).unwrap();
        let st = local_design(&d, &x_ref, &params, theta).unwrap();

        let pool = full_sort(&d, &x_ref, params.n_close);
        let mut chosen: Vec<usize> = pool[..6].to_vec();
        let mut remaining: Vec<usize> = pool[6..].to_vec();
        while chosen.len() < 8 {
            let rows: Vec<f64> = chosen.iter().flat_map(|&i| d.row(i).to_vec()).collect();
            let v0 = dense_variance(&rows, 2, &x_ref, &h);
            let mut best = (f64::NEG_INFINITY, 0);
            for (pos, &c) in remaining.iter().enumerate() {
                let mut more = rows.clone();
                more.extend_from_slice(d.row(c));
                let red = v0 - dense_variance(&more, 2, &x_ref, &h);
                if red > best.0 {
                    best = (red, pos);
                }
            }
            chosen.push(remaining.remove(best.1));
        }
        assert_eq!(st.chosen_indices(), &chosen[..], "seed {seed}");
    }
}

#[test]
fn variance_never_increases_and_pool_is_respected() {
    let d = random_design(50, 2000, 3);
    let tree = KdTree::new(&d);
    let mut r = rng(51);
    for _ in 0..10 {
        let x: Vec<f64> = (0..3).map(|_| r.random::<f64>()).collect();
        let params = LocalDesignParams::with_defaults(30, 2000);
        let pool = tree.nearest(&x, params.n_close).unwrap();
        let theta = pool_theta0(&d, &x, &pool);
        let (st, trace) = local_design_in_pool(&d, &x, &params, theta, &pool).unwrap();
        for w in trace.variances.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        let ids = st.chosen_indices();
        assert_eq!(ids.len(), 30);
        assert!(ids.iter().all(|i| pool.contains(i)));
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 30);
    }
}

fn smooth(x: &[f64]) -> f64 {
    (5.0 * x[0]).sin() * (3.0 * x[1]).cos() + x[0] * x[0] + 0.5 * x[1]
}

#[test]
fn alc_beats_nearest_neighbours_on_average() {
    let x = lhs_sample(&LhsSpec::unit(2000, 2, 60)).unwrap();
    let y = x.chunks(2).map(smooth).collect();
    let d = Design::new(x, 2, y).unwrap();
    let refs = lhs_sample(&LhsSpec::unit(120, 2, 61)).unwrap();
    let mut sse = [0.0; 2];
    for (k, method) in [Method::Alc, Method::Nn].into_iter().enumerate() {
        let params = LocalDesignParams {
            method,
            ..LocalDesignParams::with_defaults(20, 2000)
        };
        for xr in refs.chunks(2) {
            let fit = local_fit(&d, xr, &params).unwrap();
            sse[k] += (fit.prediction.mean - smooth(xr)).powi(2);
        }
    }
    assert!(sse[0] <= sse[1], "alc {} vs nn {}", sse[0] / 120.0, sse[1] / 120.0);
}

#[test]
fn likelihood_search_improves_on_the_incoming_lengthscale() {
    let d = random_design(70, 500, 2);
    let y: Vec<f64> = d.inputs().chunks(2).map(smooth).collect();
    let d = Design::new(d.inputs().to_vec(), 2, y).unwrap();
    let x = [0.3, 0.7];
    let params = LocalDesignParams {
        stages: 1,
        ..LocalDesignParams::with_defaults(25, 500)
    };
    let fit = local_fit(&d, &x, &params).unwrap();
    let pool = nearest_neighbors(&d, &x, params.n_close).unwrap();
    let theta0 = pool_theta0(&d, &x, &pool);
    let local = d.subset(fit.state.chosen_indices());
    let at = |t: f64| {
        log_marginal_likelihood(&build_gp(&local, Hyperparameters::new(t, params.eta).unwrap()).unwrap())
            .unwrap()
    };
    assert!(at(fit.theta_hat) >= at(theta0) - 1e-12);
}

#[test]
fn one_stage_nn_is_plain_local_kriging() {
    let d = random_design(80, 400, 2);
    let x = [0.52, 0.31];
    let params = LocalDesignParams {
        stages: 1,
        method: Method::Nn,
        ..LocalDesignParams::with_defaults(20, 400)
    };
    let fit = local_fit(&d, &x, &params).unwrap();
    let nn = nearest_neighbors(&d, &x, 20).unwrap();
    assert_eq!(fit.state.chosen_indices(), &nn[..]);
    let direct = build_gp(&d.subset(&nn), Hyperparameters::new(fit.theta_hat, params.eta).unwrap())
        .unwrap()
        .predict(&x)
        .unwrap();
    assert_eq!(fit.prediction, direct);
    assert_eq!(fit.prediction.dof, 20);
    assert_eq!(fit.stage_count, 1);
}

#[test]
fn repeated_fits_are_identical() {
    let d = random_design(90, 800, 3);
    let params = LocalDesignParams::with_defaults(25, 800);
    let x = [0.2, 0.9, 0.4];
    let a = local_fit(&d, &x, &params).unwrap();
    let b = local_fit(&d, &x, &params).unwrap();
    assert_eq!(a.state.chosen_indices(), b.state.chosen_indices());
    assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
    assert_eq!(a.prediction, b.prediction);
    let batch = LocalDesignParams {
        backend: AlcBackend::Batch,
        ..params
    };
    let c = local_fit(&d, &x, &batch).unwrap();
    assert_eq!(a.state.chosen_indices(), c.state.chosen_indices());
    assert_eq!(a.prediction, c.prediction);
}
