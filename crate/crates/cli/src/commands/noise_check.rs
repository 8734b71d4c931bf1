use kickflow::noise::cdf;
use kickflow::rng::kick_stream;
use kickflow::{project_pm, project_qm, sample_kick, support_bound, XiSampler};
use serde_json::json;

use super::Status;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::Outputs;

/// `int r^j rho(r) dr` for even `j`, in closed form.
fn moment(j: i32) -> f64 {
    let j = j as f64;
    15.0 / 8.0 * (1.0 / (j + 1.0) - 2.0 / (j + 3.0) + 1.0 / (j + 5.0))
}

/// Sample statistics of the coefficient law and of drawn kicks.
pub fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Status> {
    let basis = cfg.basis()?;
    let layout = cfg.layout(&basis)?;
    let sampler = XiSampler::default();
    let seed = cfg.kick_seed();
    let nc = &cfg.noise_check;

    let n = nc.draws;
    let mut rng = kick_stream(seed, u64::MAX, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut in_box = true;
    for _ in 0..n {
        let r = sampler.sample(&mut rng);
        in_box &= r.abs() <= 1.0;
        s1 += r;
        s2 += r * r;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let se_mean = (moment(2) / n as f64).sqrt();
    let se_var = ((moment(4) - moment(2).powi(2)) / n as f64).sqrt();
    out.lap("moments");

    let m = nc.m;
    let draws = nc.independence_draws;
    let k = layout.space_modes();
    let mut head = vec![vec![0.0; draws]; m];
    let mut tail = vec![vec![0.0; draws]; m];
    for d in 0..draws {
        let eta = sample_kick(
            &layout,
            &sampler,
            &mut kick_stream(seed, u64::MAX - 1, d as u64),
        );
        for p in 0..layout.time_modes() {
            for kk in 0..k {
                in_box &= eta.coeffs[(p, kk)].abs() <= layout.amplitude(p, kk);
            }
        }
        let pm = project_pm(&eta, m, &layout)?;
        let qm = project_qm(&eta, m, &layout)?;
        for i in 0..m {
            let (hi, ti) = (layout.order()[i], layout.order()[m + i]);
            head[i][d] = pm.coeffs[(hi / k, hi % k)];
            tail[i][d] = qm.coeffs[(ti / k, ti % k)];
        }
    }
    let nf = draws as f64;
    let mut z = Vec::with_capacity(m);
    for i in 0..m {
        let (ma, mb) = (
            head[i].iter().sum::<f64>() / nf,
            tail[i].iter().sum::<f64>() / nf,
        );
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, c) in head[i].iter().zip(&tail[i]) {
            sab += (a - ma) * (c - mb);
            saa += (a - ma).powi(2);
            sbb += (c - mb).powi(2);
        }
        z.push((sab / (saa * sbb).sqrt()).abs() * nf.sqrt());
    }
    let max_z = z.iter().cloned().fold(0.0, f64::max);
    out.lap("independence");

    let sup = support_bound(&layout, &basis)?;
    let mean_z = mean.abs() / se_mean;
    let var_z = (var - moment(2)).abs() / se_var;
    let report = json!({
        "draws": n,
        "mean": mean,
        "mean_se": se_mean,
        "mean_z": mean_z,
        "variance": var,
        "variance_exact": moment(2),
        "variance_se": se_var,
        "variance_z": var_z,
        "cdf_at_one": cdf(1.0),
        "support_respected": in_box,
        "e_radius": sup.e_radius,
        "v_dual_sup_sq": sup.v_dual_sup_sq,
        "independence": {
            "M": m,
            "draws": draws,
            "abs_corr_z": z,
            "max_abs_corr_z": max_z,
        },
        "pass": mean_z <= 3.0 && var_z <= 3.0 && in_box && max_z <= 3.0,
    });
    out.write_json("noise_check.json", &report)?;
    Ok(Status::Completed)
}
