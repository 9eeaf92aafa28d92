use uavmac::acceptance::{all_passed, run_all, Settings};

#[test]
fn acceptance_criteria() {
    let outcomes = run_all(&Settings::default());
    for outcome in &outcomes {
        println!("{outcome}");
    }
    let failed: Vec<u8> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id)
        .collect();
    assert!(all_passed(&outcomes), "failed criteria: {failed:?}");
}
