mod common;

use morebrac::env::{EnvKind, EnvSpec, NormStats, Transition};
use morebrac::rng::rng_from;
use morebrac::uncertainty::{
    check_epistemic, check_epistemic_with_seeds, check_sensitivity, filter_rollout, penalize_reward, Ablations,
    Candidate, Decision, Dynamics, ScoreTable, UncertaintyConfig,
};
use morebrac::world_model::{WorldModel, WorldModelConfig};
use proptest::prelude::*;
use rand::Rng;

/// `s' = gain · s`, ignoring the action.
struct Scaled {
    gain: f64,
    env: EnvSpec,
    norm: NormStats,
}

impl Scaled {
    fn new(gain: f64) -> Self {
        let mut env = common::linear_spec();
        env.state_low = vec![-1e6; 2];
        env.state_high = vec![1e6; 2];
        Self {
            gain,
            env,
            norm: NormStats {
                state_mean: vec![0.3, -0.2],
                state_std: vec![2.0, 0.5],
                reward_min: 0.0,
                reward_max: 1.0,
            },
        }
    }
}

impl Dynamics for Scaled {
    fn env(&self) -> &EnvSpec {
        &self.env
    }
    fn norm(&self) -> &NormStats {
        &self.norm
    }
    fn window_n(&self) -> usize {
        1
    }
    fn has_dropout(&self) -> bool {
        false
    }
    fn predict_next(&self, h: &[Vec<Vec<f64>>], _: &[Vec<f64>], _: Option<u64>) -> morebrac::Result<Vec<Vec<f64>>> {
        Ok(h.iter().map(|w| w.last().unwrap().iter().map(|x| self.gain * x).collect()).collect())
    }
}

fn thresholds() -> UncertaintyConfig {
    UncertaintyConfig {
        e_t: 1.0,
        s_t: 1.0,
        d_t: 1.0,
        e_max: 2.0,
        k: 1.0,
        l_p: 0.5,
        k_mc: 3,
        pert_sigma: 0.01,
        n_pert: 8,
    }
}

fn candidates(n: usize) -> Vec<Candidate> {
    (0..n)
        .map(|i| Candidate {
            transition: Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 0.0,
                next_state: vec![i as f64 + 1.0],
                done: false,
            },
            reward: 0.8,
        })
        .collect()
}

#[test]
fn linear_map_sensitivity_matches_closed_form() {
    let sigma = 0.05;
    let m = Scaled::new(2.0);
    let (var, _) = check_sensitivity(&m, &[vec![1.0, 0.5]], &[0.0], sigma, 1000, 1.0, 11).unwrap();
    let expected = 4.0 * sigma * sigma;
    // variance of a 1000-sample variance estimate: relative sd ≈ sqrt(2/999) ≈ 4.5%
    assert!((var - expected).abs() < 0.15 * expected, "{var} vs {expected}");
}

#[test]
fn constant_model_and_zero_sigma_have_no_variance() {
    let c = Scaled::new(0.0);
    let (v, pass) = check_sensitivity(&c, &[vec![1.0, 0.5]], &[0.2], 0.1, 16, 1e-20, 3).unwrap();
    assert!(v < 1e-20 && pass, "{v}");
    let m = Scaled::new(2.0);
    let (v, pass) = check_sensitivity(&m, &[vec![1.0, 0.5]], &[0.2], 0.0, 16, 1e-20, 3).unwrap();
    assert!(v < 1e-20 && pass, "{v}");
}

fn small_model(dropout: f64) -> morebrac::Result<(WorldModel, Vec<Vec<f64>>, Vec<f64>)> {
    let env = EnvKind::Pendulum;
    let d = morebrac::env::generate_dataset(env, morebrac::env::Tier::Random, 300, 2, Default::default()).unwrap();
    let norm = NormStats::fit(d.transitions()).unwrap();
    let cfg = WorldModelConfig {
        window_n: 3,
        encoder_layers: 1,
        encoder_hidden: 8,
        refiner_hidden: 8,
        reward_hidden: 8,
        dropout_rate: dropout,
        ..Default::default()
    };
    let t = &d.trajectories[0].transitions;
    let h = t[..3].iter().map(|x| x.state.clone()).collect();
    let a = t[2].action.clone();
    Ok((WorldModel::new(cfg, env.spec(), norm, 9)?, h, a))
}

#[test]
fn epistemic_variance_from_dropout() {
    let (m, h, a) = small_model(0.3).unwrap();
    let (v1, _) = check_epistemic(&m, &h, &a, 3, 0.0, 40).unwrap();
    let (v2, _) = check_epistemic(&m, &h, &a, 3, 0.0, 40).unwrap();
    assert_eq!(v1, v2);
    assert!(v1 > 0.0);
    let (same, pass) = check_epistemic_with_seeds(&m, &h, &a, &[7, 7, 7], 1e-20).unwrap();
    assert!(same < 1e-20 && pass, "{same}");
}

#[test]
fn models_without_dropout_are_rejected() {
    assert!(small_model(0.0).is_err());
}

#[test]
fn penalty_spot_values() {
    assert_eq!(penalize_reward(1.0, 1.5, 2.0, 0.5), 1.0 / 3.0);
    assert_eq!(penalize_reward(0.7, 0.2, 5.0, 0.5), 0.7);
    assert_eq!(penalize_reward(0.7, 9.0, 0.0, 0.5), 0.7);
}

proptest! {
    #[test]
    fn penalty_is_bounded_and_decreasing(r in 0.0..=1.0f64, k in 0.0..10.0f64, lp in -1.0..1.0f64, u in -2.0..4.0f64, du in 1e-3..1.0f64) {
        let p = penalize_reward(r, u, k, lp);
        prop_assert!(p >= 0.0 && p <= r);
        if u > lp && k > 0.0 && r > 0.0 {
            prop_assert!(penalize_reward(r, u + du, k, lp) < p);
        }
        prop_assert!((penalize_reward(r, lp + 1e-12, k, lp) - r).abs() < 1e-9);
    }
}

fn random_table(rng: &mut impl Rng, n: usize) -> ScoreTable {
    ScoreTable {
        manifold: (0..n).map(|_| rng.gen_range(0.0..2.2)).collect(),
        sensitivity: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
        epistemic: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
    }
}

/// Accepted step indices straight from the definition.
fn oracle(t: &ScoreTable, c: &UncertaintyConfig) -> Vec<usize> {
    let cut = t.manifold.iter().position(|u| *u > c.e_max).unwrap_or(t.manifold.len());
    (0..cut)
        .filter(|&i| t.manifold[i] <= c.e_t && t.sensitivity[i] <= c.s_t && t.epistemic[i] <= c.d_t)
        .collect()
}

fn accepted(t: &ScoreTable, c: &UncertaintyConfig) -> Vec<usize> {
    let mut table = t.clone();
    let out = filter_rollout(0, &candidates(t.manifold.len()), &mut table, c, Ablations::default()).unwrap();
    out.accepted.iter().map(|f| f.verdict.step).collect()
}

#[test]
fn relaxing_thresholds_only_adds_transitions() {
    let mut rng = rng_from(2024);
    for _ in 0..100 {
        let t = random_table(&mut rng, 12);
        let strict = UncertaintyConfig {
            e_t: rng.gen_range(0.5..1.5),
            s_t: rng.gen_range(0.0..1.5),
            d_t: rng.gen_range(0.0..1.5),
            l_p: 0.0,
            ..thresholds()
        };
        let loose = UncertaintyConfig {
            e_t: (strict.e_t + rng.gen_range(0.0..0.5)).min(strict.e_max),
            s_t: strict.s_t + rng.gen_range(0.0..0.5),
            d_t: strict.d_t + rng.gen_range(0.0..0.5),
            ..strict.clone()
        };
        let a = accepted(&t, &strict);
        let b = accepted(&t, &loose);
        assert_eq!(a, oracle(&t, &strict));
        assert_eq!(b, oracle(&t, &loose));
        assert!(a.iter().all(|i| b.contains(i)), "{a:?} ⊄ {b:?}");
    }
}

#[test]
fn truncation_discards_the_tail() {
    let mut rng = rng_from(77);
    let c = thresholds();
    for _ in 0..100 {
        let n = rng.gen_range(1..15);
        let mut t = random_table(&mut rng, n);
        let k = rng.gen_range(0..n);
        t.manifold[k] = c.e_max + 1.0;
        let mut table = t.clone();
        let out = filter_rollout(3, &candidates(n), &mut table, &c, Ablations::default()).unwrap();
        let first = t.manifold.iter().position(|u| *u > c.e_max).unwrap();
        assert_eq!(out.truncated_at, Some(first));
        assert!(out.accepted.iter().all(|f| f.verdict.step < first));
        assert_eq!(out.verdicts.len(), n);
        assert!(out.verdicts[first].truncate);
        assert!(out.verdicts[first + 1..].iter().all(|v| v.decision == Decision::AfterTruncation));
    }
}

#[test]
fn injected_violation_at_step_three() {
    let c = thresholds();
    let mut t = ScoreTable {
        manifold: vec![0.1; 5],
        sensitivity: vec![0.1; 5],
        epistemic: vec![0.1; 5],
    };
    t.manifold[3] = c.e_max + 1.0;
    let out = filter_rollout(0, &candidates(5), &mut t, &c, Ablations::default()).unwrap();
    assert_eq!(out.truncated_at, Some(3));
    let steps: Vec<usize> = out.accepted.iter().map(|f| f.verdict.step).collect();
    assert_eq!(steps, vec![0, 1, 2]);
}

#[test]
fn short_circuit_leaves_later_scores_unevaluated() {
    let c = thresholds();
    let mut t = ScoreTable {
        manifold: vec![1.5, 0.1, 0.1, 0.1],
        sensitivity: vec![0.1, 1.5, 0.1, 0.1],
        epistemic: vec![0.1, 0.1, 1.5, 0.1],
    };
    let out = filter_rollout(0, &candidates(4), &mut t, &c, Ablations::default()).unwrap();
    let v = &out.verdicts;
    assert_eq!(v[0].decision, Decision::FailedManifold);
    assert_eq!((v[0].sensitivity_var, v[0].epistemic_var), (None, None));
    assert_eq!(v[1].decision, Decision::FailedSensitivity);
    assert_eq!(v[1].epistemic_var, None);
    assert_eq!(v[2].decision, Decision::FailedEpistemic);
    assert_eq!(v[3].decision, Decision::Accepted);
    assert_eq!(out.accepted.len(), 1);
}

#[test]
fn rewards_below_onset_are_untouched() {
    let c = thresholds();
    let mut t = ScoreTable {
        manifold: vec![0.2, 0.4, 0.5],
        sensitivity: vec![0.0; 3],
        epistemic: vec![0.0; 3],
    };
    let out = filter_rollout(0, &candidates(3), &mut t, &c, Ablations::default()).unwrap();
    assert_eq!(out.accepted.len(), 3);
    assert!(out.accepted.iter().all(|f| f.penalized_reward == f.reward));
}

#[test]
fn ablations_switch_single_behaviors() {
    let c = thresholds();
    let t = ScoreTable {
        manifold: vec![0.9, 1.5, 0.1, 3.0],
        sensitivity: vec![0.1, 0.1, 1.5, 0.1],
        epistemic: vec![1.5, 0.1, 0.1, 0.1],
    };
    let run = |a: Ablations| filter_rollout(0, &candidates(4), &mut t.clone(), &c, a).unwrap();
    let base = run(Ablations::default());
    assert!(base.accepted.is_empty());
    assert_eq!(base.truncated_at, Some(3));

    let no_mc = run(Ablations { no_mc: true, ..Default::default() });
    assert_eq!(no_mc.accepted.len(), 1);
    assert!(no_mc.accepted[0].penalized_reward < no_mc.accepted[0].reward);

    let no_pen = run(Ablations { no_mc: true, no_penalty: true, ..Default::default() });
    assert_eq!(no_pen.accepted[0].penalized_reward, no_pen.accepted[0].reward);

    let no_sens = run(Ablations { no_sensitivity: true, ..Default::default() });
    let steps: Vec<usize> = no_sens.accepted.iter().map(|f| f.verdict.step).collect();
    assert_eq!(steps, vec![2]);
    assert_eq!(no_sens.verdicts[2].sensitivity_var, None);

    let no_vae = run(Ablations { no_vae: true, ..Default::default() });
    assert_eq!(no_vae.truncated_at, None);
    let steps: Vec<usize> = no_vae.accepted.iter().map(|f| f.verdict.step).collect();
    assert_eq!(steps, vec![1, 3]);
    assert!(no_vae.accepted.iter().all(|f| f.penalized_reward == f.reward));
}
