//! Runs the lifted filter on a sampled trace and prints hypothesis counts
//! per step: `scale warehouse:n=10 7`.

use std::time::Instant;

use lifted_filter::filter::{Filter, FilterConfig};
use lifted_filter::scenario::{from_reference, sample_trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let reference = args.next().unwrap_or_else(|| "warehouse".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let sc = from_reference(&reference)?;
    let trace = sample_trace(&sc, seed, sc.horizon)?;
    let filter = Filter::new(sc.schemas.clone(), sc.sensors.clone(), FilterConfig::default());
    let mut belief = sc.initial.clone();
    let start = Instant::now();
    let mut peak = belief.len();
    for step in &trace.steps {
        let (updated, u) = filter.update(&belief, &step.observation)?;
        let (predicted, p) = filter.predict(&updated)?;
        println!(
            "t={:<3} pre={:<5} update={:<5} (unmerged {:<6}) predict={:<5} (unmerged {:<6}) {:?}",
            step.t,
            belief.len(),
            u.merged,
            u.unmerged,
            p.merged,
            p.unmerged,
            start.elapsed()
        );
        peak = peak.max(u.merged).max(p.merged);
        belief = predicted;
    }
    println!("peak {peak} hypotheses, {:?}", start.elapsed());
    Ok(())
}
