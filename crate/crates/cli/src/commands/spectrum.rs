use std::fmt::Write as _;

use kickflow::linearization::psi1_diagonal;

use super::Status;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::Outputs;

/// Eigenvalue table with the one-kick decay and noise amplitudes per mode.
pub fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Status> {
    let solver = cfg.solver()?;
    let basis = solver.basis();
    let layout = cfg.layout(basis)?;
    let psi1 = psi1_diagonal(&solver);
    let mut csv = String::from("k,m,n,alpha,psi1");
    for p in 0..layout.time_modes() {
        let _ = write!(csv, ",b_{p}");
    }
    csv.push('\n');
    for k in 0..basis.dim() {
        let mode = basis.mode(k);
        let _ = write!(
            csv,
            "{k},{},{},{},{}",
            mode.m,
            mode.n,
            basis.eigenvalue(k),
            psi1[k]
        );
        for p in 0..layout.time_modes() {
            let _ = write!(csv, ",{}", layout.amplitude(p, k));
        }
        csv.push('\n');
    }
    out.write("spectrum.csv", &csv)?;
    out.lap("spectrum");
    Ok(Status::Completed)
}
