use std::path::{Path, PathBuf};

use kickflow::{
    dual_lipschitz_lower, ensemble_step, initial_compact, krylov_average, mixing_fit,
    monte_carlo_floor, support_bound, tail_energy, Absorbing, Basis, Dictionary, Ensemble, Error,
    Field, KickSource,
};
use serde_json::json;

use super::{read_text, Status};
use crate::checkpoint::{MixRow, MixState};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

/// Lineage offset of the second ensemble.
const SECOND_LINEAGE: u64 = 1 << 32;

pub struct MixArgs {
    pub resume: Option<PathBuf>,
    pub stop_after: Option<usize>,
}

fn compact(spec: &str, basis: &Basis, cfg: &ExperimentConfig) -> CliResult<Vec<Field>> {
    let m = &cfg.mix;
    let radius = match spec {
        "unit" => 1.0,
        "r3" => 3.0,
        path => {
            let mat = kickflow::io::read_matrix::<f64>(&read_text(Path::new(path))?)?;
            Error::check_dim(basis.dim(), mat.ncols())?;
            return Ok((0..mat.nrows())
                .map(|r| Field::from_vec(mat.row(r).iter().cloned().collect()))
                .collect());
        }
    };
    Ok(initial_compact(
        basis.dim(),
        m.compact_modes,
        radius,
        m.particles,
        cfg.seed,
    )?)
}

fn fresh(cfg: &ExperimentConfig, basis: &Basis) -> CliResult<MixState> {
    let specs: Vec<&str> = cfg.mix.compact.split(',').map(str::trim).collect();
    if specs.len() != 2 {
        return Err(CliError::config(format!(
            "[mix] compact must name two compacts, got {:?}",
            cfg.mix.compact
        )));
    }
    let small = Ensemble::uniform(compact(specs[0], basis, cfg)?, 0);
    let large = Ensemble::uniform(compact(specs[1], basis, cfg)?, SECOND_LINEAGE);
    if small.len() < 2 || large.len() < 2 {
        return Err(CliError::config(
            "[mix] each compact needs at least 2 particles",
        ));
    }
    Ok(MixState {
        config: fingerprint(cfg),
        kick: 0,
        dim: basis.dim(),
        m1: small.max_energy().max(large.max_energy()),
        rows: Vec::new(),
        small,
        large,
        window: Vec::new(),
    })
}

/// Fingerprint of the settings a checkpoint depends on.
fn fingerprint(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    c.mix.checkpoint_every = 0;
    c.experiment = None;
    c.fingerprint()
}

fn pooled(a: &Ensemble, b: &Ensemble) -> Ensemble {
    let mut pool = a.particles.clone();
    pool.extend(b.particles.iter().cloned());
    let mut e = Ensemble::uniform(pool, 0);
    e.kick_index = a.kick_index;
    e
}

/// Distance between two ensembles started from different compacts.
pub fn run(cfg: &ExperimentConfig, args: &MixArgs, out: &mut Outputs) -> CliResult<Status> {
    let solver = cfg.solver()?;
    let basis = solver.basis().clone();
    let layout = cfg.layout(&basis)?;
    let abs = Absorbing::new(&basis, &support_bound(&layout, &basis)?);
    let src = KickSource::new(layout, cfg.kick_seed());
    let m = &cfg.mix;
    let dict = Dictionary::standard(
        basis.dim(),
        m.dictionary_leading,
        m.dictionary_random,
        cfg.seed,
        m.clamp_radius,
    )?;
    let cutoff = m.tail_cutoff.unwrap_or_else(|| {
        let mut a = basis.eigenvalues().to_vec();
        a.sort_by(f64::total_cmp);
        a[a.len() / 2]
    });

    let mut state = match &args.resume {
        Some(path) => {
            let s = MixState::from_text(&read_text(path)?)?;
            if s.config != fingerprint(cfg) || s.dim != basis.dim() {
                return Err(CliError::config(format!(
                    "checkpoint {} was written for a different configuration",
                    path.display()
                )));
            }
            log::info!("resuming at kick {}", s.kick);
            s
        }
        None => fresh(cfg, &basis)?,
    };
    let burn_in = abs.burn_in(state.m1);
    let k_star = abs.k_star(state.m1);
    out.lap("setup");

    loop {
        let k = state.kick;
        if state.rows.len() == k {
            let dist = dual_lipschitz_lower(&state.small, &state.large, &dict)?.value;
            let pool = pooled(&state.small, &state.large);
            let floor = monte_carlo_floor(&pool, &dict, cfg.seed)?;
            let tail = tail_energy(&state.small, &basis, cutoff)?
                .max
                .max(tail_energy(&state.large, &basis, cutoff)?.max);
            state.rows.push(MixRow {
                k,
                dist,
                floor,
                tail_max: tail,
                mean_norm: pool.mean_norm(),
            });
            if k >= burn_in {
                state
                    .window
                    .push((state.small.clone(), state.large.clone()));
                if state.window.len() > m.stationary_window {
                    state.window.remove(0);
                }
            }
            log::info!("kick {k}: distance {dist:.4e}, floor {floor:.3e}");
        }
        if k >= m.kicks {
            break;
        }
        let every = m.checkpoint_every;
        if args.stop_after == Some(k) || (every > 0 && k > 0 && k % every == 0) {
            out.write(CHECKPOINT_FILE, &state.to_text())?;
            if args.stop_after == Some(k) {
                out.lap("ensembles");
                return Ok(Status::Checkpointed);
            }
        }
        state.small = ensemble_step(&state.small, &solver, &src)?;
        state.large = ensemble_step(&state.large, &solver, &src)?;
        state.kick += 1;
    }
    out.lap("ensembles");

    let mut csv = String::from("k,dist_lower,floor,tail_energy_max,mean_normH\n");
    for r in &state.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.k, r.dist, r.floor, r.tail_max, r.mean_norm
        ));
    }
    out.write("mix.csv", &csv)?;

    let analysis = analyse(&state, burn_in, &dict);
    out.lap("analysis");
    let mut summary = json!({
        "k_star": k_star,
        "burn_in": burn_in,
        "radius_sq": abs.radius_sq(),
        "m1": state.m1,
        "particles": [state.small.len(), state.large.len()],
        "kicks": m.kicks,
        "tail_cutoff": cutoff,
    });
    let result = match analysis {
        Ok(a) => {
            let obj = summary.as_object_mut().expect("object");
            obj.insert("c".into(), json!(a.c));
            obj.insert("C".into(), json!(a.big_c));
            obj.insert("r2".into(), json!(a.r2));
            obj.insert("fit_points".into(), json!(a.points));
            obj.insert("floor".into(), json!(a.floor));
            obj.insert("stationary_distance".into(), json!(a.stationary));
            Ok(Status::Completed)
        }
        Err(e) => {
            summary
                .as_object_mut()
                .expect("object")
                .insert("error".into(), json!(e.to_string()));
            Err(CliError::Core(e))
        }
    };
    out.write_json("mix.json", &summary)?;
    result
}

struct Analysis {
    floor: f64,
    c: f64,
    big_c: f64,
    r2: f64,
    points: usize,
    stationary: f64,
}

fn analyse(state: &MixState, burn_in: usize, dict: &Dictionary) -> kickflow::Result<Analysis> {
    let post: Vec<f64> = state
        .rows
        .iter()
        .filter(|r| r.k >= burn_in)
        .map(|r| r.floor)
        .collect();
    if post.is_empty() {
        return Err(Error::InsufficientData {
            usable: 0,
            required: 1,
        });
    }
    let floor = post.iter().sum::<f64>() / post.len() as f64;
    let pre: Vec<(f64, f64)> = state
        .rows
        .iter()
        .take_while(|r| r.dist > 2.0 * floor)
        .map(|r| (r.k as f64, r.dist))
        .collect();
    let fit = mixing_fit(&pre)?;
    let (a, b): (Vec<Ensemble>, Vec<Ensemble>) = state.window.iter().cloned().unzip();
    let stationary =
        dual_lipschitz_lower(&krylov_average(&a, 0)?, &krylov_average(&b, 0)?, dict)?.value;
    Ok(Analysis {
        floor,
        c: fit.c,
        big_c: fit.big_c,
        r2: fit.r2,
        points: fit.points,
        stationary,
    })
}
