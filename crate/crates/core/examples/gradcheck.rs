//! Runs every invariant suite: gradients against central differences,
//! μ-law algebra, filter and wavelet behavior, segmentation counts.

use emgttl::verify::{run, Suite};

fn main() {
    let reports = run(Suite::All);
    for r in &reports {
        print!("{r}");
    }
    let ok = reports.iter().all(|r| r.passed());
    println!("{}", if ok { "all checks passed" } else { "some checks failed" });
    std::process::exit(if ok { 0 } else { 1 });
}
