//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs the desk preset matrix in a fresh directory (about 30 minutes on one core).
//! `MOREBRAC_ACCEPTANCE_OUT=dir` keeps the artifacts there; the directory is wiped first.
//! `MOREBRAC_ACCEPTANCE_FULL=1` repeats every seed for the determinism check instead of seed 0 only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use morebrac::env::{read_dataset, EnvKind, NormStats, Tier, Trajectory, Transition};
use morebrac::nn::{grad_check, Activation, LayerSpec, Matrix, Network, Tape};
use morebrac::pipeline::{run_matrix, Pipeline, RunConfig, RunReport, Variant};
use morebrac::replay::{PartitionedBuffer, PrioritySpec, SamplingSchedule, Source, Stored};
use morebrac::rng::rng_from;
use morebrac::uncertainty::{filter_rollout, penalize_reward, Ablations, Candidate, ScoreTable, UncertaintyConfig};
use morebrac::vae::{kl_divergence, ood_separation, percentile, uniform_pairs, Noise, Vae, VaeConfig};
use morebrac::world_model::{build_windows, evaluate_windows};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: usize, name: &str, outcome: Outcome) {
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {n:>2} {name}: {detail}");
            }
        }
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: morebrac::Error) -> String {
    e.to_string()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn sequence_loss(n: &Network, steps: &[Matrix], target: &Matrix) -> morebrac::Result<(Tape, morebrac::nn::Var)> {
    let mut tape = Tape::new();
    let mut state = n.zero_state_vars(&mut tape, target.rows);
    let mut last = None;
    for x in steps {
        let xv = tape.leaf(x.clone());
        let (y, next) = n.forward_tape(&mut tape, xv, &state, None, false)?;
        state = next;
        last = Some(y);
    }
    let loss = tape.mse(last.expect("at least one step"), target);
    Ok((tape, loss))
}

fn gradient_fidelity() -> Outcome {
    let t0 = Instant::now();
    let mut worst = [0.0f64; 4];
    let mut rng = rng_from(101);
    for i in 0..50u64 {
        let (din, dh) = (rng.gen_range(1..4), rng.gen_range(2..5));
        let stacks = [
            vec![LayerSpec::affine(din, dh), LayerSpec::activation(dh, Activation::Tanh), LayerSpec::affine(dh, 2)],
            vec![LayerSpec::lstm(din, dh), LayerSpec::affine(dh, 2)],
            vec![LayerSpec::gru(din, dh), LayerSpec::affine(dh, 2)],
        ];
        for (k, specs) in stacks.into_iter().enumerate() {
            let mut net = Network::new(specs, 1000 + i).map_err(err)?;
            let len = if k == 0 { 1 } else { 3 };
            let steps: Vec<Matrix> = (0..len).map(|_| random_matrix(&mut rng, 2, din)).collect();
            let target = random_matrix(&mut rng, 2, 2);
            let e = grad_check(&mut net, |n| sequence_loss(n, &steps, &target), 1e-5).map_err(err)?;
            worst[k] = worst[k].max(e);
        }
        let env = EnvKind::Pendulum.spec();
        let norm = NormStats {
            state_mean: vec![0.0; env.state_dim],
            state_std: vec![1.0; env.state_dim],
            reward_min: -1.0,
            reward_max: 0.0,
        };
        let cfg = VaeConfig {
            hidden_width: 4,
            ..Default::default()
        };
        let mut vae = Vae::new(cfg, env.clone(), norm, 2000 + i).map_err(err)?;
        let x = random_matrix(&mut rng, 3, vae.input_dim());
        let e = grad_check(&mut vae, |v| v.loss(&x, Noise::Seeded(i)), 1e-5).map_err(err)?;
        worst[3] = worst[3].max(e);
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "max rel error affine {:.1e}, lstm {:.1e}, gru {:.1e}, vae {:.1e}; {secs:.1}s",
        worst[0], worst[1], worst[2], worst[3]
    );
    check(worst.iter().all(|w| *w < 1e-4) && secs < 120.0, detail)
}

fn kl_identities() -> Outcome {
    let zero = kl_divergence(&[0.0; 4], &[0.0; 4]);
    if zero != 0.0 {
        return Err(format!("KL at the prior is {zero}"));
    }
    let mut rng = rng_from(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mu: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            for (m, l) in mu.iter().zip(&lv) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let z = m + (l / 2.0).exp() * eps;
                acc += 0.5 * (z * z - eps * eps) - l / 2.0;
            }
        }
        let exact = kl_divergence(&mu, &lv);
        worst = worst.max((acc / n as f64 - exact).abs() / exact);
    }
    check(worst < 0.02, format!("KL(0, 0) = 0; worst relative Monte Carlo gap {:.3}%", 100.0 * worst))
}

fn penalty_contract() -> Outcome {
    let spot = penalize_reward(1.0, 1.5, 2.0, 0.5);
    if spot != 1.0 / 3.0 {
        return Err(format!("spot value {spot}"));
    }
    let mut rng = rng_from(303);
    for _ in 0..10_000 {
        let r = rng.gen_range(0.01..1.0);
        let k = rng.gen_range(0.01..10.0);
        let lp = rng.gen_range(-1.0..1.0);
        let below = lp - rng.gen_range(0.0..2.0);
        if penalize_reward(r, below, k, lp) != r || penalize_reward(r, lp + 3.0, 0.0, lp) != r {
            return Err(format!("reward changed at u {below} <= l_p {lp} or K = 0"));
        }
        let u = lp + rng.gen_range(1e-6..3.0);
        let du = rng.gen_range(1e-6..1.0);
        if penalize_reward(r, u + du, k, lp) >= penalize_reward(r, u, k, lp) {
            return Err(format!("not decreasing at u {u}"));
        }
    }
    Ok(format!("R=1, K=2, u-l_p=1 gives {spot:.6}; 10000 random contract cases hold"))
}

fn candidates(n: usize) -> Vec<Candidate> {
    (0..n)
        .map(|i| Candidate {
            transition: Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: 0.5,
                next_state: vec![i as f64 + 1.0],
                done: false,
            },
            reward: 0.5,
        })
        .collect()
}

fn table(rng: &mut impl Rng, n: usize) -> ScoreTable {
    ScoreTable {
        manifold: (0..n).map(|_| rng.gen_range(0.0..2.2)).collect(),
        sensitivity: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
        epistemic: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
    }
}

fn accepted(t: &ScoreTable, c: &UncertaintyConfig) -> morebrac::Result<(Vec<usize>, Option<usize>)> {
    let out = filter_rollout(0, &candidates(t.manifold.len()), &mut t.clone(), c, Ablations::default())?;
    Ok((out.accepted.iter().map(|f| f.verdict.step).collect(), out.truncated_at))
}

fn brute_force(t: &ScoreTable, c: &UncertaintyConfig) -> Vec<usize> {
    let cut = t.manifold.iter().position(|u| *u > c.e_max).unwrap_or(t.manifold.len());
    (0..cut)
        .filter(|&i| t.manifold[i] <= c.e_t && t.sensitivity[i] <= c.s_t && t.epistemic[i] <= c.d_t)
        .collect()
}

fn filter_monotonicity() -> Outcome {
    let base = UncertaintyConfig {
        e_t: 1.0,
        s_t: 1.0,
        d_t: 1.0,
        e_max: 2.0,
        k: 1.0,
        l_p: 0.0,
        k_mc: 3,
        pert_sigma: 0.01,
        n_pert: 8,
    };
    let mut rng = rng_from(404);
    for case in 0..100 {
        let t = table(&mut rng, 12);
        let strict = UncertaintyConfig {
            e_t: rng.gen_range(0.5..1.5),
            s_t: rng.gen_range(0.0..1.5),
            d_t: rng.gen_range(0.0..1.5),
            ..base.clone()
        };
        let loose = UncertaintyConfig {
            e_t: (strict.e_t + rng.gen_range(0.0..0.5)).min(strict.e_max),
            s_t: strict.s_t + rng.gen_range(0.0..0.5),
            d_t: strict.d_t + rng.gen_range(0.0..0.5),
            ..strict.clone()
        };
        let (a, _) = accepted(&t, &strict).map_err(err)?;
        let (b, _) = accepted(&t, &loose).map_err(err)?;
        if a != brute_force(&t, &strict) || b != brute_force(&t, &loose) || !a.iter().all(|i| b.contains(i)) {
            return Err(format!("table {case}: strict {a:?}, loose {b:?}"));
        }
    }
    for case in 0..100 {
        let n = rng.gen_range(1..15);
        let mut t = table(&mut rng, n);
        let k = rng.gen_range(0..n);
        t.manifold[k] = base.e_max + 1.0;
        let first = t.manifold.iter().position(|u| *u > base.e_max).unwrap();
        let (a, cut) = accepted(&t, &base).map_err(err)?;
        if cut != Some(first) || a.iter().any(|i| *i >= first) {
            return Err(format!("rollout {case}: violation at {first}, truncated at {cut:?}, accepted {a:?}"));
        }
    }
    Ok("100 relaxed tables match the brute-force oracle; 100 injected violations truncate".into())
}

fn stored(reward: f64) -> Stored {
    Stored {
        transition: Transition {
            state: vec![reward],
            action: vec![0.0],
            reward,
            next_state: vec![reward],
            done: false,
        },
        reward,
        next_action: None,
        source: Source::Offline,
        seq: 0,
    }
}

fn sampling_curriculum() -> Outcome {
    let mut rng = rng_from(505);
    let mut b = PartitionedBuffer::new((0..2000).map(|_| stored(rng.gen())).collect(), 100_000).map_err(err)?;
    b.insert_generated((0..500).map(|_| stored(rng.gen())));
    b.rebuild_prioritized(&PrioritySpec::default()).map_err(err)?;
    let s = SamplingSchedule {
        warmup_steps: 50,
        ..Default::default()
    };
    for step in 0..50 {
        let batch = b.sample(&s, 100, step, &mut rng).map_err(err)?;
        if batch.counts != [100, 0, 0] {
            return Err(format!("warm-up step {step} drew {:?}", batch.counts));
        }
    }
    let mut counts = [0usize; 3];
    for step in 0..10_000 {
        let batch = b.sample(&s, 100, 50 + step, &mut rng).map_err(err)?;
        for p in &batch.partitions {
            counts[*p as usize] += 1;
        }
    }
    let frac: Vec<f64> = counts.iter().map(|c| *c as f64 / 1e6).collect();
    let within = frac.iter().zip([0.6, 0.3, 0.1]).all(|(f, w)| (f - w).abs() <= 0.01);

    let mut empty = PartitionedBuffer::new((0..300).map(|_| stored(rng.gen())).collect(), 100).map_err(err)?;
    let s0 = SamplingSchedule {
        warmup_steps: 0,
        ..Default::default()
    };
    let lone = empty.sample(&s0, 100, 0, &mut rng).map_err(err)?.counts;
    empty.rebuild_prioritized(&PrioritySpec::default()).map_err(err)?;
    let no_gen = empty.sample(&s0, 100, 0, &mut rng).map_err(err)?.counts;
    let fallback = lone == [100, 0, 0] && no_gen == [90, 0, 10];
    check(
        within && fallback,
        format!(
            "warm-up 100% offline; mixture {:.4}/{:.4}/{:.4} over 10^4 batches; fallbacks {lone:?} {no_gen:?}",
            frac[0], frac[1], frac[2]
        ),
    )
}

fn seconds(dir: &Path) -> f64 {
    std::fs::read_to_string(dir.join("timings.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["seconds"].as_f64())
        .unwrap_or(f64::NAN)
}

fn heldout(p: &Pipeline) -> morebrac::Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for tier in [Tier::Random, Tier::Medium, Tier::Expert] {
        let (d, _) = read_dataset(&p.layout.data_dir(), &format!("heldout-{}", tier.name()))?;
        out.extend(d.trajectories);
    }
    Ok(out)
}

fn world_model_fidelity(pipes: &[Pipeline]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for p in pipes {
        let model = p.load_world_model().map_err(err)?;
        let cfg = model.config();
        let trajs = heldout(p).map_err(err)?;
        let windows = build_windows(&trajs, cfg.window_n, cfg.horizon_tau).map_err(err)?;
        let refs: Vec<_> = windows.iter().collect();
        let e = evaluate_windows(&model, &refs).map_err(err)?;
        let secs = seconds(&p.layout.sim_dir());
        ok &= e.r2_state >= 0.9 && e.r2_reward >= 0.8 && secs < 600.0;
        parts.push(format!("seed {}: R² state {:.4} reward {:.4} in {secs:.0}s", p.layout.seed, e.r2_state, e.r2_reward));
    }
    check(ok, parts.join("; "))
}

fn vae_separation(pipes: &[Pipeline]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for p in pipes {
        let vae = p.load_vae().map_err(err)?;
        let trajs = heldout(p).map_err(err)?;
        let pairs: Vec<_> = trajs
            .iter()
            .flat_map(|t| t.transitions.iter())
            .map(|t| (t.state.clone(), t.action.clone()))
            .collect();
        let ind: Vec<f64> = vae.score_batch(&pairs).map_err(err)?.iter().map(|s| s.u).collect();
        let noise = uniform_pairs(vae.env(), 5000, 606 + p.layout.seed);
        let ood: Vec<f64> = vae.score_batch(&noise).map_err(err)?.iter().map(|s| s.u).collect();
        let frac = ood_separation(&ind, &ood, 90.0).map_err(err)?;
        let p90 = percentile(&ind, 90.0).map_err(err)?;
        let secs = seconds(&p.layout.vae_dir());
        ok &= frac >= 0.9 && secs < 300.0;
        parts.push(format!("seed {}: {:.1}% above p90 {p90:.2e} in {secs:.0}s", p.layout.seed, 100.0 * frac));
    }
    check(ok, parts.join("; "))
}

fn row_mean(r: &RunReport, v: &Variant) -> Option<f64> {
    r.rows.iter().find(|row| row.variant == v.name()).and_then(|row| row.mean)
}

fn fresh(dir: &Path) -> std::io::Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)
}

fn identical_metrics(a: &Path, b: &Path, seeds: &[u64], variants: &[Variant]) -> Outcome {
    let mut compared = 0;
    for seed in seeds {
        for v in variants {
            let rel = PathBuf::from(format!("seed-{seed}")).join(v.name()).join("metrics.jsonl");
            let x = std::fs::read(a.join(&rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
            let y = std::fs::read(b.join(&rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
            if x != y {
                return Err(format!("{} differs", rel.display()));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} metrics files byte-identical across two executions"))
}

fn main() {
    let mut report = Report { failed: 0 };
    report.line(1, "gradient fidelity", gradient_fidelity());
    report.line(2, "KL identities", kl_identities());
    report.line(3, "reward penalty contract", penalty_contract());
    report.line(4, "filter monotonicity and truncation", filter_monotonicity());
    report.line(5, "sampling curriculum", sampling_curriculum());

    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = RunConfig::load(&root.join("configs/desk.toml")).expect("desk preset loads");
    let keep = std::env::var_os("MOREBRAC_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temp dir");
    let out = keep.unwrap_or_else(|| tmp.path().join("a"));
    fresh(&out).expect("clean output dir");
    let variants = config.matrix_variants();

    let t0 = Instant::now();
    let matrix = run_matrix(&config, &out, &config.seeds, &variants, false);
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    let pipes: Vec<Pipeline> = config
        .seeds
        .iter()
        .map(|s| Pipeline::new(config.clone(), &out, *s, false).expect("pipeline"))
        .collect();

    report.line(6, "world-model fidelity", world_model_fidelity(&pipes));
    report.line(7, "VAE OOD separation", vae_separation(&pipes));

    let full = Variant::full();
    let no_syn = Variant::single(morebrac::pipeline::Ablation::NoSynthesis);
    let no_vae = Variant::single(morebrac::pipeline::Ablation::NoVae);
    match &matrix {
        Ok(r) => {
            let (f, s, v) = (row_mean(r, &full), row_mean(r, &no_syn), row_mean(r, &no_vae));
            let clean = r.failures() == 0;
            let c8 = match (f, s) {
                (Some(f), Some(s)) => check(
                    clean && f - s >= 5.0 && minutes <= 60.0,
                    format!("full {f:.2} vs no-synthesis {s:.2} (margin {:.2}) over {} seeds in {minutes:.1} min", f - s, config.seeds.len()),
                ),
                _ => Err("missing matrix rows".into()),
            };
            report.line(8, "synthesis beats the no-synthesis baseline", c8);
            let c9 = match (f, v) {
                (Some(f), Some(v)) => check(clean && v < f, format!("no-vae {v:.2} vs full {f:.2}")),
                _ => Err("missing matrix rows".into()),
            };
            report.line(9, "no-vae ablation falls below full", c9);
        }
        Err(e) => {
            report.line(8, "synthesis beats the no-synthesis baseline", Err(e.to_string()));
            report.line(9, "no-vae ablation falls below full", Err(e.to_string()));
        }
    }

    let all = std::env::var_os("MOREBRAC_ACCEPTANCE_FULL").is_some();
    let seeds: Vec<u64> = if all { config.seeds.clone() } else { config.seeds[..1].to_vec() };
    let second = tmp.path().join("b");
    let c10 = fresh(&second)
        .map_err(|e| e.to_string())
        .and_then(|_| run_matrix(&config, &second, &seeds, &variants, false).map_err(err))
        .and_then(|_| identical_metrics(&out, &second, &seeds, &variants));
    report.line(10, "determinism", c10);

    println!("{} of 10 criteria failed", report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
