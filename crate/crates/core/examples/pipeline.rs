//! Run every stage for one seed from a config file, then print the final score and the report location.
//!
//! cargo run --release --example pipeline -- configs/desk.toml [out-dir]

use morebrac::pipeline::{emit_report, Pipeline, RunConfig};

fn main() -> morebrac::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map(String::as_str).unwrap_or("configs/desk.toml");
    let cfg = RunConfig::load(std::path::Path::new(path))?;
    let out = args.get(1).map(Into::into).unwrap_or_else(|| cfg.out_dir.clone());
    let seed = cfg.seeds[0];
    for v in cfg.matrix_variants() {
        let p = Pipeline::new(cfg.clone(), &out, seed, false)?;
        let eval = p.run_all(&v)?;
        println!("seed {seed} {:>14}: score {:.2} (return {:.1} ± {:.1})", v.name(), eval.score, eval.mean_return, eval.std_return);
    }
    let stats = emit_report(&out)?;
    println!("{} charts written to {}", stats.runs, out.join("report").display());
    Ok(())
}
