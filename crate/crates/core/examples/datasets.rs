//! Generate behavior-tier datasets, write them to disk, read them back and print return statistics.
//!
//! cargo run --release --example datasets -- [env] [dir]

use morebrac::env::{generate_dataset, normalized_score, read_dataset, reference_returns, write_dataset, EnvKind, MixRatio, Tier};

fn main() -> morebrac::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let env = EnvKind::from_name(args.first().map(String::as_str).unwrap_or("pendulum"))?;
    let dir = std::path::PathBuf::from(args.get(1).cloned().unwrap_or_else(|| "out/datasets".into()));
    let (rnd, exp) = reference_returns(env)?;
    println!("{}: random reference {rnd:.1}, expert reference {exp:.1}", env.name());
    for tier in [Tier::Random, Tier::Medium, Tier::Expert, Tier::ReplayMix] {
        let d = generate_dataset(env, tier, 10_000, 42, MixRatio::default())?;
        let m = write_dataset(&d, &dir, tier.name(), None)?;
        let (back, _) = read_dataset(&dir, tier.name())?;
        assert_eq!(back, d);
        let ret = d.mean_episode_return();
        println!(
            "{:>10}: {} trajectories, return {ret:8.1}, score {:6.1}, sha256 {}…",
            tier.name(),
            m.trajectory_count,
            normalized_score(ret, rnd, exp)?,
            &m.checksum[..12]
        );
    }
    Ok(())
}
