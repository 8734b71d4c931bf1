use kickflow::stabilisation::CouplingStop;
use kickflow::{assemble_gram, couple, tune, Control, CouplingSetup, Dictionary, KickSource};
use serde_json::json;

use super::Status;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::Outputs;

/// Lineages used to warm pairs up, disjoint from the coupling lineages.
const WARMUP_LINEAGE: u64 = 1 << 40;

/// Controlled coupling of nearby pairs.
pub fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Status> {
    let solver = cfg.solver()?;
    let basis = solver.basis().clone();
    let layout = cfg.layout(&basis)?;
    let seed = cfg.kick_seed();
    let src = KickSource::new(layout.clone(), seed);
    let template = cfg.control_template(layout.dim())?;
    let fixed = cfg.control.m.is_some() && cfg.control.gamma.is_some();
    let delta = cfg.control.delta;

    let mut ctl: Option<Control> = fixed.then(|| template.clone());
    let mut tuned_eps = None;
    let mut csv = String::from("pair,k,dist,qhat,phi_norm,eps_hat\n");
    let mut pairs = Vec::new();
    let (mut log_q, mut n_q, mut q_max, mut c_hat) = (0.0, 0usize, 0.0f64, 0.0f64);
    let mut violation = None;
    for pair in 0..cfg.couple.pairs as u64 {
        let mut u = basis.zeros();
        for w in 0..cfg.couple.warmup as u64 {
            u = solver.time_one_map(&u, &src.kick(WARMUP_LINEAGE + pair, w))?;
        }
        let dir = Dictionary::standard(basis.dim(), 0, 1, seed ^ pair, 1.0)?
            .directions
            .remove(0);
        let v = &u + &dir.scale(delta * (1.0 - 1e-9));

        let ctl = match &ctl {
            Some(c) => c.clone(),
            None => {
                let recording = solver.recording(true);
                let base = recording.flow(&u, &src.kick(pair, 0))?;
                let ops = assemble_gram(&recording, &base)?;
                let t = tune(&ops, &layout, cfg.control.epsilon_target, &template)?;
                log::info!(
                    "tuned M = {}, gamma = {:e}, eps = {:.3e}",
                    t.config.m,
                    t.config.gamma,
                    t.epsilon
                );
                out.lap("tune");
                tuned_eps = Some(t.epsilon);
                ctl = Some(t.config.clone());
                t.config
            }
        };

        let setup = CouplingSetup {
            solver: &solver,
            layout: &layout,
            sampler: &src.sampler,
            ctl: &ctl,
            seed,
            lineage: pair,
        };
        let report = couple(&setup, &u, &v, cfg.couple.steps)?;
        for s in &report.steps {
            csv.push_str(&format!(
                "{pair},{},{},{},{},{}\n",
                s.k, s.dist, s.qhat, s.phi_norm, s.eps_hat
            ));
            if s.qhat > 0.0 {
                log_q += s.qhat.ln();
                n_q += 1;
            }
        }
        q_max = q_max.max(report.q_max);
        c_hat = c_hat.max(report.c_hat);
        log::info!(
            "pair {pair}: {} steps, {:?}, q_geo = {:.4}",
            report.steps.len(),
            report.stop,
            report.q_geo_mean
        );
        if violation.is_none() && report.stop == CouplingStop::SqueezingViolated {
            violation = report.clone().into_result().err();
        }
        pairs.push(json!({
            "pair": pair,
            "steps": report.steps.len(),
            "stop": format!("{:?}", report.stop),
            "q_geo_mean": report.q_geo_mean,
            "q_max": report.q_max,
            "C_hat": report.c_hat,
            "C2_hat": report.c2_hat,
            "eps_max": report.eps_max,
        }));
    }
    out.lap("couple");
    out.write("couple.csv", &csv)?;
    let ctl = ctl.expect("at least one pair");
    let summary = json!({
        "q_geo_mean": if n_q > 0 { (log_q / n_q as f64).exp() } else { 0.0 },
        "q_max": q_max,
        "C_hat": c_hat,
        "M": ctl.m,
        "gamma": ctl.gamma,
        "delta": delta,
        "tuned_epsilon": tuned_eps,
        "violated": violation.is_some(),
        "pairs": pairs,
    });
    out.write_json("couple.json", &summary)?;
    match violation {
        Some(e) => Err(e.into()),
        None => Ok(Status::Completed),
    }
}
