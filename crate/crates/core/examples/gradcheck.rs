//! Compares every analytic gradient against central differences.
//!
//! ```bash
//! cargo run --release -p nfed --example gradcheck -- 200
//! ```

use nfed::gradcheck::run_all;

fn main() -> nfed::Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    println!("{:<28} {:>8} {:>10} {:>12} {:>8}", "layer", "samples", "entries", "max_rel_err", "secs");
    for r in run_all(samples, 0)? {
        println!("{:<28} {:>8} {:>10} {:>12.3e} {:>8.2}", r.layer, r.samples, r.entries, r.max_rel_err, r.seconds);
    }
    Ok(())
}
