//! Oracle suite behind the `validate` subcommand.

use serde::Serialize;

use crate::analysis;
use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Trace oracles, refinement oracle and closed-form reference points.
/// `trials` scales the Monte Carlo runs (the refinement oracle uses a fifth).
pub fn suite(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for p in [0.0, 0.05, 0.2] {
        let r = analysis::validate_trace_identities(p, 2, 8, 256, trials, seed)?;
        for c in &r.checks {
            out.push(Check::new(
                format!("traces p={p} {}", c.name),
                c.pass,
                format!(
                    "mc {:.5} ± {:.5}, closed form {:.5}",
                    c.estimate.mean, c.estimate.std_err, c.expected
                ),
            ));
        }
    }
    for p in [0.0, 0.02] {
        let r = analysis::refine_oracle(8, 2, 8, 512, p, 0.1, (trials / 5).max(20), seed)?;
        out.push(Check::new(
            format!("refined nmse p={p}"),
            r.pass,
            format!(
                "correlation {:.5} ± {:.5}, lmmse {:.5}, closed form {:.5}",
                r.correlation.mean, r.correlation.std_err, r.lmmse.mean, r.formula
            ),
        ));
    }
    let c = analysis::nmse_coarse(96, 4, 32, 0.0, 1.0)?;
    out.push(Check::new(
        "coarse nmse rank 96",
        (c - 0.25).abs() < 1e-12,
        format!("{c}"),
    ));
    // the estimate error grows with the noise ratio, so the extremes pair up
    let lo = analysis::gate_rhs(96, 4, 32, 0.1, 1.0, 1.0);
    let hi = analysis::gate_rhs(96, 4, 32, 1e-3, 0.0, 1.0);
    out.push(Check::new(
        "gate range",
        lo >= 0.63 && hi <= 0.88,
        format!("[{lo:.4}, {hi:.4}]"),
    ));
    let r = analysis::effective_code_rate(992, 992, 1, 2048)?;
    out.push(Check::new(
        "effective rate",
        (r - 0.4844).abs() < 5e-5,
        format!("{r:.5}"),
    ));
    Ok(out)
}
