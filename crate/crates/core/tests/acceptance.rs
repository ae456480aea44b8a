//! One PASS/FAIL line per acceptance criterion. Pass criterion numbers as
//! arguments to run a subset.

use threshold_scope::acceptance::run;

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids = if picked.is_empty() { (1..=10).collect() } else { picked };
    let mut failed = 0;
    for id in ids {
        let r = run(id);
        println!("{}", r.line());
        failed += usize::from(!r.pass);
    }
    println!("{failed} criteria failing");
}
