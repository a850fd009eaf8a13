use lforge_core::selftest::{run_all, SelftestOptions};

fn main() {
    let outcomes = run_all(&SelftestOptions::default());
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
