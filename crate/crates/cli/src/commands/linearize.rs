use std::path::Path;

use kickflow::linearization::operator_norm;
use kickflow::{assemble_gram, compactness_diagnostic, Absorbing, Kick, KickSource};
use serde_json::json;

use super::{initial_state, read_text, Status};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub struct LinearizeArgs {
    pub u0: String,
    /// Kick index on lineage 0, or a kick file.
    pub kick: String,
    pub matrices: bool,
}

fn kick_for(spec: &str, src: &KickSource<f64>) -> CliResult<Kick> {
    if let Ok(index) = spec.parse::<u64>() {
        return Ok(src.kick(0, index));
    }
    let eta: Kick = kickflow::io::read_kick(&read_text(Path::new(spec))?)?;
    if eta.time_modes() != src.layout.time_modes() || eta.space_modes() != src.layout.space_modes()
    {
        return Err(CliError::Core(kickflow::Error::DimensionMismatch {
            expected: src.layout.dim(),
            found: eta.time_modes() * eta.space_modes(),
        }));
    }
    Ok(eta)
}

/// Tangent operators of the time-one map along one base trajectory.
pub fn run(cfg: &ExperimentConfig, args: &LinearizeArgs, out: &mut Outputs) -> CliResult<Status> {
    let solver = cfg.solver()?.recording(true);
    let basis = solver.basis().clone();
    let layout = cfg.layout(&basis)?;
    let src = KickSource::new(layout.clone(), cfg.kick_seed());
    let u0 = initial_state(&args.u0, &basis)?;
    let eta = kick_for(&args.kick, &src)?;
    let base = solver.flow(&u0, &eta)?;
    out.lap("base");
    let ops = assemble_gram(&solver, &base)?;
    out.lap("assemble");

    let mut psi1 = String::from("k,m,n,alpha,psi1\n");
    for k in 0..basis.dim() {
        let mode = basis.mode(k);
        psi1.push_str(&format!(
            "{k},{},{},{},{}\n",
            mode.m,
            mode.n,
            basis.eigenvalue(k),
            ops.psi1[k]
        ));
    }
    out.write("psi1.csv", &psi1)?;

    let sv = compactness_diagnostic(&ops).singular_values;
    let mut csv = String::from("i,sigma\n");
    for (i, s) in sv.iter().enumerate() {
        csv.push_str(&format!("{i},{s}\n"));
    }
    out.write("psi2_singular_values.csv", &csv)?;

    let mut eig: Vec<f64> = ops.gram_eigenvalues.iter().cloned().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let mut csv = String::from("i,eigenvalue\n");
    for (i, l) in eig.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    out.write("gram_spectrum.csv", &csv)?;

    if args.matrices {
        out.write("psi2.matrix", &kickflow::io::write_matrix(&ops.psi2))?;
        out.write("a.matrix", &kickflow::io::write_matrix(&ops.a_matrix))?;
        out.write("gram.matrix", &kickflow::io::write_matrix(&ops.gram))?;
    }

    let support = kickflow::support_bound(&layout, &basis)?;
    let abs = Absorbing::new(&basis, &support);
    let lead = sv.first().copied().unwrap_or(0.0);
    let summary = json!({
        "psi1_norm": ops.psi1_norm(),
        "kappa_bar": abs.kappa_bar,
        "psi2_norm": operator_norm(&ops.psi2),
        "psi2_sigma_ratio_20": sv.get(19).map(|s| s / lead),
        "gram_min_eigenvalue": ops.min_gram_eigenvalue(),
        "gram_max_eigenvalue": ops.max_gram_eigenvalue(),
        "base_norm_initial": u0.norm(),
        "base_norm_endpoint": ops.base_endpoint.norm(),
    });
    out.write_json("linearize.json", &summary)?;
    Ok(Status::Completed)
}
