//! Verify the analytic gradients of the whole pipeline (encoders, both
//! fusion stages, decoder, loss) against central finite differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use thoam::harness::cmd_gradcheck;

fn main() {
    match cmd_gradcheck() {
        Ok(report) => {
            println!(
                "PASS: max relative error {:e} across {} parameter tensors (threshold {:e})",
                report.max_rel_error, report.parameters, report.threshold
            );
        }
        Err(e) => {
            eprintln!("FAIL: {e}");
            std::process::exit(3);
        }
    }
}
