//! Compare analytic gradients with central differences on a few random codes.

use craniofit::gradcheck::{run_gradcheck, GradcheckOptions};

fn main() -> craniofit::Result<()> {
    let count = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let report = run_gradcheck(&GradcheckOptions::new(0, count))?;
    print!("{}", report.table());
    println!("{} codes in {:.2} s: {}", count, report.seconds, if report.passed() { "ok" } else { "failed" });
    Ok(())
}
