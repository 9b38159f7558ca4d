//! Numerical check of the cost-difference identity and the gradient,
//! curvature and convexity inequalities on sampled points.

use gail_lqr::diagnostics::lemma_inequality_suite;
use gail_lqr::gail::{QuadraticPenalty, ThetaBox};
use gail_lqr::random::generate_instance;
use gail_lqr::{CostParam, Mat};

fn main() -> gail_lqr::Result<()> {
    let inst = generate_instance(3, 2, 0.8, 3)?;
    let bx = ThetaBox::uniform(0.5, 2.0)?;
    let reg = QuadraticPenalty::new(
        1.0,
        CostParam::new(Mat::identity(3, 3), Mat::identity(2, 2))?,
    )?;
    let r = lemma_inequality_suite(&inst, &bx, &reg, 2024, 1000)?;
    println!("{} of {} sampled points accepted", r.accepted, r.trials);
    for row in &r.rows {
        println!(
            "{:<34} {:>4}/{:<4} violations, worst {:>10.3e}{}",
            row.name,
            row.violations,
            row.checked,
            row.worst,
            if row.informational {
                "  (informational)"
            } else {
                ""
            }
        );
    }
    println!("all checked rows hold: {}", r.passes());
    Ok(())
}
