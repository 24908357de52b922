//! Train the behavior-regularized learner on offline pendulum data only and score it.
//!
//! cargo run --release --example offline_policy -- [tier] [steps]

use morebrac::env::{generate_dataset, reference_returns, normalized_score, EnvKind, MixRatio, NormStats, Tier};
use morebrac::policy::{evaluate_policy, Actor, Learner, PolicyBatch, PolicyConfig};
use morebrac::replay::{PartitionedBuffer, SamplingSchedule, Source, Stored};
use morebrac::rng::rng_from;

fn main() -> morebrac::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tier = Tier::from_name(args.first().map(String::as_str).unwrap_or("random"))?;
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let env = EnvKind::Pendulum;
    let spec = env.spec();
    let data = generate_dataset(env, tier, 50_000, 3, MixRatio::default())?;
    let norm = NormStats::fit(data.transitions())?;
    let offline: Vec<Stored> = data
        .trajectories
        .iter()
        .flat_map(|t| {
            t.transitions.iter().enumerate().map(|(i, tr)| Stored {
                transition: tr.clone(),
                reward: norm.apply_reward(tr.reward),
                next_action: (!tr.done).then(|| t.transitions.get(i + 1).map(|n| n.action.clone())).flatten(),
                source: Source::Offline,
                seq: 0,
            })
        })
        .collect();
    let buffer = PartitionedBuffer::new(offline, 1)?;
    let config = PolicyConfig::default();
    let mut learner = Learner::new(config.clone(), spec.state_dim, spec.action_dim, 1)?;
    let schedule = SamplingSchedule::default();
    let mut rng = rng_from(9);
    let (rnd, exp) = reference_returns(env)?;
    for step in 0..steps {
        let batch = buffer.sample(&schedule, config.batch_size, 0, &mut rng)?;
        let pb = PolicyBatch::from_stored(&batch.items, &norm, &spec)?;
        let (stats, _) = learner.train_step(&pb, &mut rng)?;
        if (step + 1) % 5000 == 0 {
            let actor = Actor {
                network: learner.actor(),
                norm: &norm,
                env: &spec,
            };
            let ev = evaluate_policy(env, |s| actor.act(s), 10, 123)?;
            println!(
                "step {:>6}: critic loss {:.4}, mean Q {:.2}, return {:.1}, score {:.1}",
                step + 1,
                stats.loss,
                stats.mean_q,
                ev.mean,
                normalized_score(ev.mean, rnd, exp)?
            );
        }
    }
    Ok(())
}
