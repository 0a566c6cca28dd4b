//! SGD and Adam on f(p) = p^2 from p = 1, and the step-decay schedule.
//!
//! cargo run --example optimizers

use semtag::optim::{adam_step, sgd_step};
use semtag::{LrSchedule, OptimState, OptimizerKind};

fn main() -> semtag::Result<()> {
    for (kind, lr) in [(OptimizerKind::Sgd, 1e-2), (OptimizerKind::Adam, 1e-3), (OptimizerKind::Adam, 1e-2)] {
        let mut p = vec![1.0];
        let mut state = OptimState::new(kind, &p);
        let mut reached = None;
        for step in 1..=5000 {
            let g = vec![2.0 * p[0]];
            match kind {
                OptimizerKind::Sgd => sgd_step(&mut p, &g, lr)?,
                OptimizerKind::Adam => adam_step(&mut p, &g, &mut state, lr)?,
            }
            if reached.is_none() && p[0].abs() < 1e-3 {
                reached = Some(step);
            }
        }
        match reached {
            Some(step) => println!("{kind} lr {lr}: |p| < 1e-3 after {step} steps"),
            None => println!("{kind} lr {lr}: |p| = {:.3e} after 5000 steps", p[0].abs()),
        }
    }

    let schedule = LrSchedule::step_decay(1e-3)?;
    let lrs: Vec<String> =
        (0..20).map(|e| schedule.lr_at(e).map(|lr| format!("{lr:.0e}"))).collect::<Result<_, _>>()?;
    println!("learning rate by epoch: {}", lrs.join(" "));
    Ok(())
}
