use morebrac::env::{generate_dataset, Dataset, EnvKind, MixRatio, NormStats, Tier};
use morebrac::nn::Checkpoint;
use morebrac::rng::rng_from;
use morebrac::vae::{elbo_loss, kl_divergence, ood_separation, percentile, train_vae, uniform_pairs, Noise, Vae, VaeConfig};
use morebrac::Error;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn pendulum_data(n: usize, seed: u64) -> Dataset {
    generate_dataset(EnvKind::Pendulum, Tier::ReplayMix, n, seed, MixRatio::default()).unwrap()
}

fn fresh_vae(config: VaeConfig) -> Vae {
    let d = pendulum_data(500, 1);
    let norm = NormStats::fit(d.transitions()).unwrap();
    Vae::new(config, EnvKind::Pendulum.spec(), norm, 3).unwrap()
}

#[test]
fn kl_closed_form_values() {
    assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    assert_eq!(kl_divergence(&[1.0], &[0.0]), 0.5);
    let e = elbo_loss(&[1.0, 2.0], &[1.0, 2.0], &[0.0], &[0.0], 1.0).unwrap();
    assert_eq!((e.recon_loss, e.kl_loss, e.u), (0.0, 0.0, 0.0));
    let e = elbo_loss(&[0.0, 0.0], &[1.0, 3.0], &[1.0], &[0.0], 2.0).unwrap();
    assert_eq!(e.recon_loss, 5.0);
    assert_eq!(e.u, 6.0);
    assert!(elbo_loss(&[0.0], &[1.0, 3.0], &[1.0], &[0.0], 1.0).is_err());
}

#[test]
fn kl_is_nonnegative() {
    let mut rng = rng_from(17);
    for _ in 0..10_000 {
        let mu: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let lv: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        assert!(kl_divergence(&mu, &lv) >= 0.0);
    }
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = rng_from(23);
    for _ in 0..20 {
        let mu: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // E_q[log q(z) − log p(z)] with z = mu + σε
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            for (m, l) in mu.iter().zip(&lv) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let z = m + (l / 2.0).exp() * eps;
                acc += 0.5 * (z * z - eps * eps) - l / 2.0;
            }
        }
        let mc = acc / n as f64;
        let exact = kl_divergence(&mu, &lv);
        assert!((mc - exact).abs() / exact < 0.02, "mc {mc} exact {exact}");
    }
}

#[test]
fn forward_contracts() {
    let vae = fresh_vae(VaeConfig::default());
    let (s, a) = (vec![1.0, 0.0, 0.5], vec![0.3]);
    let z1 = vae.forward(&s, &a, Noise::Zero).unwrap();
    assert_eq!(z1, vae.forward(&s, &a, Noise::Zero).unwrap());
    let r1 = vae.forward(&s, &a, Noise::Seeded(9)).unwrap();
    assert_eq!(r1, vae.forward(&s, &a, Noise::Seeded(9)).unwrap());
    assert_ne!(r1.reconstruction, vae.forward(&s, &a, Noise::Seeded(10)).unwrap().reconstruction);
    assert_eq!(z1.mu.len(), 2);
    assert_eq!(z1.reconstruction.len(), 4);
    assert!(matches!(vae.score(&s, &a), Err(Error::Untrained(_))));
    let mut frozen = vae.clone();
    frozen.freeze();
    assert!(frozen.score(&s, &a).unwrap().is_finite());
    assert!(matches!(frozen.score(&s, &[0.1, 0.2]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn training_separates_uniform_noise() {
    let env = EnvKind::Pendulum;
    let data = pendulum_data(12_000, 5);
    let held = pendulum_data(2_000, 6);
    let norm = NormStats::fit(data.transitions()).unwrap();
    let cfg = VaeConfig {
        epochs: 15,
        ..Default::default()
    };
    let (vae, report) = train_vae(data.transitions(), &env.spec(), &norm, &cfg, 2).unwrap();
    assert!(report.best_val_u < report.untrained_val_u);
    let before = vae.checksum();

    let ind_pairs: Vec<(Vec<f64>, Vec<f64>)> = held.transitions().map(|t| (t.state.clone(), t.action.clone())).collect();
    let ind: Vec<f64> = vae.score_batch(&ind_pairs).unwrap().iter().map(|s| s.u).collect();
    let ood_pairs = uniform_pairs(&env.spec(), 2_000, 77);
    let ood: Vec<f64> = vae.score_batch(&ood_pairs).unwrap().iter().map(|s| s.u).collect();
    let frac = ood_separation(&ind, &ood, 90.0).unwrap();
    println!("separation {frac}");
    assert!(frac >= 0.9, "separation {frac}");

    // far outside the action range scores above the truncation default
    let e_max = percentile(&ind, 99.5).unwrap();
    let (s, _) = &ind_pairs[0];
    assert!(vae.score(s, &[200.0]).unwrap() > e_max);
    assert_eq!(vae.score(s, &[0.5]).unwrap(), vae.score(s, &[0.5]).unwrap());
    assert_eq!(vae.checksum(), before);

    let restored = Vae::from_checkpoint(Checkpoint::from_bytes(&vae.to_checkpoint().to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(restored.checksum(), before);
    assert_eq!(restored.score(s, &[0.5]).unwrap(), vae.score(s, &[0.5]).unwrap());
}

#[test]
fn zero_kl_weight_reconstructs_at_least_as_well() {
    let env = EnvKind::Pendulum;
    let data = pendulum_data(4_000, 8);
    let norm = NormStats::fit(data.transitions()).unwrap();
    let base = VaeConfig {
        epochs: 10,
        ..Default::default()
    };
    let plain = VaeConfig {
        kl_weight: 0.0,
        ..base.clone()
    };
    let (v1, _) = train_vae(data.transitions(), &env.spec(), &norm, &base, 4).unwrap();
    let (v0, _) = train_vae(data.transitions(), &env.spec(), &norm, &plain, 4).unwrap();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = data.transitions().map(|t| (t.state.clone(), t.action.clone())).collect();
    let recon = |v: &Vae| v.score_batch(&pairs).unwrap().iter().map(|s| s.recon_loss).sum::<f64>() / pairs.len() as f64;
    let (r1, r0) = (recon(&v1), recon(&v0));
    println!("recon kl=1 {r1}, kl=0 {r0}");
    assert!(r0 <= r1);
}
