//! Train the manifold VAE on mixed pendulum data and measure how well it separates uniform noise.
//!
//! cargo run --release --example vae_manifold -- [transitions]

use morebrac::env::{generate_dataset, EnvKind, MixRatio, NormStats, Tier};
use morebrac::vae::{ood_separation, percentile, train_vae, uniform_pairs, VaeConfig};

fn main() -> morebrac::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30_000);
    let env = EnvKind::Pendulum;
    let spec = env.spec();
    let data = generate_dataset(env, Tier::ReplayMix, n, 5, MixRatio::default())?;
    let norm = NormStats::fit(data.transitions())?;
    let cfg = VaeConfig {
        batches_per_epoch: Some(100),
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let (vae, report) = train_vae(data.transitions(), &spec, &norm, &cfg, 1)?;
    println!(
        "trained in {:.1}s: validation u {:.4} -> {:.5} (best epoch {})",
        t0.elapsed().as_secs_f64(),
        report.untrained_val_u,
        report.best_val_u,
        report.best_epoch
    );

    let held = generate_dataset(env, Tier::ReplayMix, 5_000, 6, MixRatio::default())?;
    let pairs: Vec<_> = held.transitions().map(|t| (t.state.clone(), t.action.clone())).collect();
    let inside: Vec<f64> = vae.score_batch(&pairs)?.iter().map(|s| s.u).collect();
    let noise: Vec<f64> = vae.score_batch(&uniform_pairs(&spec, 5_000, 7))?.iter().map(|s| s.u).collect();
    for q in [50.0, 90.0, 99.0] {
        println!("in-distribution p{q}: {:.5}", percentile(&inside, q)?);
    }
    println!("uniform noise median: {:.5}", percentile(&noise, 50.0)?);
    println!("fraction of noise above in-distribution p90: {:.3}", ood_separation(&inside, &noise, 90.0)?);
    Ok(())
}
