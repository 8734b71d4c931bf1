use kickflow::{norms, relative_energy_residual, KickSource};

use super::{initial_state, Status};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::Outputs;

/// Kicked trajectory from one initial state.
pub fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Status> {
    let solver = cfg.solver()?;
    let basis = solver.basis().clone();
    let src = KickSource::new(cfg.layout(&basis)?, cfg.kick_seed());
    let mut u = initial_state(&cfg.simulate.u0, &basis)?;
    out.write("u_initial.field", &kickflow::io::write_field(&u))?;
    let mut csv = String::from("k,normH,normV,energy_residual\n");
    let n0 = norms(&u, &basis)?;
    csv.push_str(&format!("0,{},{},0\n", n0.h, n0.v));
    let mut failure = None;
    for k in 1..=cfg.simulate.kicks {
        let traj = match solver.flow(&u, &src.kick(0, (k - 1) as u64)) {
            Ok(t) => t,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let res = relative_energy_residual(&traj, &basis)?;
        u = traj.endpoint().clone();
        let n = norms(&u, &basis)?;
        csv.push_str(&format!("{k},{},{},{res}\n", n.h, n.v));
        log::info!("kick {k}: |u| = {:.6e}, residual {res:.3e}", n.h);
    }
    out.lap("integrate");
    out.write("simulate.csv", &csv)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    out.write("u_final.field", &kickflow::io::write_field(&u))?;
    Ok(Status::Completed)
}
