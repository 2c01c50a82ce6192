use fishquota::neural::{mlp_gradient, train_policy, Mlp, PolicyTrainConfig, TrainConfig};
use fishquota::rng;
use fishquota::sde::{simulate_paths, ModelParams};
use rand::Rng;

#[test]
fn gradient_matches_central_differences_on_random_nets() {
    for seed in 0..20 {
        let net = Mlp::random(&[2, 4, 2], seed).unwrap();
        let mut r = rng::substream(seed, 99);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let ts: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let (_, g) = mlp_gradient(&net, &xs, &ts).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..net.n_params())
            .map(|k| {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.params_mut()[k] += h;
                m.params_mut()[k] -= h;
                (mlp_gradient(&p, &xs, &ts).unwrap().0 - mlp_gradient(&m, &xs, &ts).unwrap().0)
                    / (2.0 * h)
            })
            .collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(
            err <= 1e-5 * norm,
            "seed {seed}: |g - fd| = {err}, |g| = {norm}"
        );
    }
}

#[test]
fn clamped_outputs_stay_in_the_box() {
    let net = Mlp::random(&[2, 50, 50, 2], 4)
        .unwrap()
        .with_clamp(0.4, 1.4);
    let mut r = rng::substream(4, 1);
    for _ in 0..10_000 {
        let x = [r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)];
        assert!(net
            .eval(&x)
            .unwrap()
            .iter()
            .all(|u| (0.4..=1.4).contains(u)));
    }
}

fn short_config(seed: u64) -> PolicyTrainConfig {
    PolicyTrainConfig {
        hidden: vec![16, 16],
        dt: 0.01,
        train: TrainConfig {
            epochs: 40,
            batch_size: 64,
            seed,
            ..Default::default()
        },
    }
}

#[test]
fn same_seed_gives_identical_policy() {
    let mut p = ModelParams::two_species();
    p.horizon = 0.5;
    let a = train_policy(&p, &short_config(3)).unwrap();
    let b = train_policy(&p, &short_config(3)).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.loss_history, b.loss_history);
}

#[test]
fn heavy_variation_penalty_gives_a_flat_policy() {
    let mut p = ModelParams::two_species();
    p.horizon = 0.5;
    p.beta = vec![1e3, 1e3];
    let trained = train_policy(&p, &short_config(1)).unwrap();
    for path in simulate_paths(&p, &trained.policy, 0.01, 50, 8).unwrap() {
        for w in path.controls.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!((a - b).abs() < 1e-2, "quota jumped by {}", (a - b).abs());
            }
        }
    }
}

/// Standard deviation of `y` about its least-squares line.
fn detrended_std(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let (xm, ym) = ((n - 1.0) / 2.0, y.iter().sum::<f64>() / n);
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let slope = y
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - xm) * (v - ym))
        .sum::<f64>()
        / sxx;
    let ss: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - ym - slope * (i as f64 - xm)).powi(2))
        .sum();
    (ss / (n - 2.0)).sqrt()
}

/// Epoch losses are batch means over fresh paths, so the smoothed curve is
/// only monotone up to its own sampling noise: a rise is tolerated while it
/// stays within three standard errors of a window mean of the running
/// minimum.
#[test]
fn smoothed_loss_does_not_rise_over_the_final_half() {
    let trained = train_policy(&ModelParams::two_species(), &PolicyTrainConfig::default()).unwrap();
    let h = &trained.loss_history;
    let smooth: Vec<f64> = h
        .windows(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    let half = &smooth[smooth.len() / 2..];
    let tail = &h[h.len() / 2..];
    let sd = detrended_std(tail);
    let tol = 3.0 * sd / 10f64.sqrt();
    let mut lowest = f64::INFINITY;
    for (k, v) in half.iter().enumerate() {
        lowest = lowest.min(*v);
        assert!(
            v - lowest <= tol,
            "window {k}: {v} is {} above the running minimum (tol {tol})",
            v - lowest
        );
    }
    assert!(half.last().unwrap() <= &half[0]);
}
