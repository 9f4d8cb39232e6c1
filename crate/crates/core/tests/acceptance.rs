//! Runs the built-in suite and prints one line per criterion.

use tractoria::selftest;

#[test]
fn acceptance_criteria() {
    let results = selftest::run_all();
    for c in &results {
        println!("{}", c.summary());
        for m in &c.measures {
            println!("       {}", m);
        }
    }
    let failed: Vec<usize> = results.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failing criteria: {:?}", failed);
}
