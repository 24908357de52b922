//! Show the warm-up then hybrid sampling curriculum of the partitioned replay buffer.
//!
//! cargo run --release --example replay_sampling

use morebrac::env::Transition;
use morebrac::replay::{PartitionedBuffer, PrioritySpec, SamplingSchedule, Source, Stored};
use morebrac::rng::rng_from;
use rand::Rng;

fn stored(reward: f64) -> Stored {
    Stored {
        transition: Transition {
            state: vec![0.0],
            action: vec![0.0],
            reward,
            next_state: vec![0.0],
            done: false,
        },
        reward,
        next_action: None,
        source: Source::Offline,
        seq: 0,
    }
}

fn main() -> morebrac::Result<()> {
    let mut rng = rng_from(3);
    let mut buffer = PartitionedBuffer::new((0..1000).map(|_| stored(rng.gen())).collect(), 500)?;
    let schedule = SamplingSchedule {
        warmup_steps: 100,
        ..Default::default()
    };
    let spec = PrioritySpec::default();
    for step in [0, 50, 100, 150, 200] {
        if step == 100 {
            buffer.insert_generated((0..800).map(|_| stored(rng.gen::<f64>() * 0.5)));
            buffer.rebuild_prioritized(&spec)?;
        }
        let b = buffer.sample(&schedule, 100, step, &mut rng)?;
        println!("step {step:>3}: sizes {:?}, batch offline/generated/prioritized {:?}", buffer.sizes(), b.counts);
    }
    let lo = buffer.prioritized().iter().map(|s| s.reward).fold(f64::INFINITY, f64::min);
    let hi = buffer.prioritized().iter().map(|s| s.reward).fold(0.0, f64::max);
    println!("prioritized holds {} transitions spanning rewards {lo:.3}..{hi:.3}", buffer.prioritized().len());
    Ok(())
}
