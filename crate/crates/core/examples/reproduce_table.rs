//! Full pipeline: datasets, perception, ensemble and baseline training, then
//! closed-loop evaluation on every noise cell.
//!
//! ```text
//! cargo run --release --example reproduce_table -- [out_dir] [config.json]
//! ```

use uqnav::harness::{self, Artifacts, RunConfig};

fn main() -> uqnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "run".into());
    let config = match args.next() {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    let report = harness::run_pipeline(&config, &Artifacts::new(&out))?;
    for (stage, t) in &report.stage_times {
        println!("{stage:<15} {:8.1} s", t.as_secs_f64());
    }
    let log = &report.cmvae.log;
    println!(
        "cmvae loss {:.5} -> {:.5}",
        log[0].total,
        log[log.len() - 1].total
    );
    println!();
    print!("{}", report.table.render(&config.noise_levels));
    let verdict = harness::ood_trend_holds(&report.table).unwrap_or(false);
    println!("verdict: {}", if verdict { "PASS" } else { "FAIL" });
    Ok(())
}
