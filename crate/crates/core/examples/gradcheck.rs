//! Finite-difference check of every loss kernel and the full model.
//!
//! cargo run --release --example gradcheck

use layoutforge::verify::{gradcheck_suite, SuiteConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let checks = gradcheck_suite(&SuiteConfig::default(), None);
    for c in &checks {
        println!("{c}  ({:.2}s)", c.seconds);
    }
    println!("all passed: {} in {:.1}s", checks.iter().all(|c| c.passed), t0.elapsed().as_secs_f64());
}
