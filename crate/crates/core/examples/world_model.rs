//! Train the learned simulator on mixed-tier pendulum data and report held-out R².
//!
//! cargo run --release --example world_model -- [transitions] [epochs]

use std::time::Instant;

use morebrac::env::{generate_dataset, EnvKind, MixRatio, Tier};
use morebrac::world_model::{train_world_model, WorldModelConfig};

fn main() -> morebrac::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(50_000);
    let epochs = args.get(1).copied().unwrap_or(12);
    let env = EnvKind::Pendulum;
    let data = generate_dataset(env, Tier::ReplayMix, n, 7, MixRatio::default())?;
    let config = WorldModelConfig {
        max_epochs: epochs,
        ..Default::default()
    };
    let start = Instant::now();
    let model = train_world_model(&data.trajectories, &env.spec(), &config, 7)?;
    let report = model.report().expect("trained model has a report");
    println!(
        "{} transitions, {} epochs (best {}), {:.1}s",
        n,
        report.epochs,
        report.best_epoch,
        start.elapsed().as_secs_f64()
    );
    println!("held-out R²: state {:.4}, reward {:.4}", report.r2_state, report.r2_reward);
    println!("val loss per epoch: {:?}", report.val_loss_history);
    Ok(())
}
