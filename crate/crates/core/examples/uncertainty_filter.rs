//! Walk a synthetic rollout through the manifold, sensitivity and dropout checks and print each verdict.
//!
//! cargo run --release --example uncertainty_filter

use morebrac::env::Transition;
use morebrac::uncertainty::{filter_rollout, penalize_reward, Ablations, Candidate, ScoreTable, UncertaintyConfig};

fn main() -> morebrac::Result<()> {
    let cfg = UncertaintyConfig {
        e_t: 1.0,
        s_t: 0.5,
        d_t: 0.5,
        e_max: 3.0,
        k: 2.0,
        l_p: 0.4,
        k_mc: 3,
        pert_sigma: 0.01,
        n_pert: 8,
    };
    let mut scores = ScoreTable {
        manifold: vec![0.2, 0.9, 1.4, 0.6, 0.3, 3.5, 0.1],
        sensitivity: vec![0.1, 0.2, 0.1, 0.9, 0.1, 0.1, 0.1],
        epistemic: vec![0.1, 0.3, 0.1, 0.1, 0.7, 0.1, 0.1],
    };
    let candidates: Vec<Candidate> = (0..7)
        .map(|i| Candidate {
            transition: Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 0.8,
                next_state: vec![i as f64 + 1.0],
                done: false,
            },
            reward: 0.8,
        })
        .collect();
    let out = filter_rollout(0, &candidates, &mut scores, &cfg, Ablations::default())?;
    for v in &out.verdicts {
        println!(
            "step {}: u {:>6} sens {:>6} mc {:>6} -> {}",
            v.step,
            fmt(v.manifold_u),
            fmt(v.sensitivity_var),
            fmt(v.epistemic_var),
            v.decision.name()
        );
    }
    for f in &out.accepted {
        println!("kept step {}: reward {:.3} -> {:.3}", f.verdict.step, f.reward, f.penalized_reward);
    }
    println!("truncated at {:?}", out.truncated_at);
    println!("R=1, K=2, u-l_p=1 gives {:.4}", penalize_reward(1.0, 1.4, 2.0, 0.4));
    Ok(())
}

fn fmt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}
