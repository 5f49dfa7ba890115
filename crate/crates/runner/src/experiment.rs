//! Experiment execution: wires the core modules into the named experiments
//! and persists their artifacts. Everything a run writes is deterministic
//! given (config, seed); the manifest's wall time is the one exception and
//! lives only in the manifest.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use bohmlab_core::{
    compare_theories, equivariance_test, evolve, evolve_ensemble, path_density_integrals,
    sample_initial, select_max_density_trajectory, sqm_measure_density, typicality,
    typicality_agreement_experiment, Ensemble, EvolutionContext, MeasureDensity, NodePolicy,
    PerceptionSet, TheoryModel, TypicalityReport, VelocityTable,
};

use crate::artifacts::ArtifactSink;
use crate::config::{ExperimentConfig, ExperimentKind, TheoryKind};
use crate::manifest::{config_hash, RunManifest};
use crate::{svg, RunnerError};

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
}

enum EnsembleSource<'a> {
    Integrate,
    Import(&'a Path),
}

/// Validates and executes a config; `base_dir` anchors relative paths
/// inside the config (perception files).
pub fn run(config: &ExperimentConfig, base_dir: &Path) -> Result<RunOutcome, RunnerError> {
    execute(config, base_dir, EnsembleSource::Integrate)
}

/// Re-analyses previously exported trajectories: the wavefunction is
/// re-evolved (cheap) but no trajectory is re-integrated.
pub fn replay(
    config: &ExperimentConfig,
    base_dir: &Path,
    trajectories_csv: &Path,
) -> Result<RunOutcome, RunnerError> {
    if matches!(
        config.experiment,
        ExperimentKind::Evolve | ExperimentKind::Trajectories
    ) {
        return Err(RunnerError::Invalid(format!(
            "experiment {:?} has nothing to replay",
            config.experiment
        )));
    }
    execute(config, base_dir, EnsembleSource::Import(trajectories_csv))
}

fn execute(
    config: &ExperimentConfig,
    base_dir: &Path,
    source: EnsembleSource,
) -> Result<RunOutcome, RunnerError> {
    let diagnostics = config.validate(base_dir);
    if !diagnostics.is_empty() {
        return Err(RunnerError::Validation(diagnostics));
    }
    let started = Instant::now();

    let grid = config.build_grid()?;
    let psi0 = config.build_state(&grid)?;
    let cfg = config.build_evolution_config(&grid)?;
    let ctx = EvolutionContext::new(
        &psi0,
        &config.potential,
        &cfg,
        config.evolution.t_final,
        config.snapshot_dt(),
    )?;

    let mut sink = ArtifactSink::new(config.output.directory.clone(), config_hash(config))?;
    let resolved = crate::manifest::canonical_toml(config);
    sink.write_text("resolved_config.toml", |w| w.write_all(resolved.as_bytes()))?;

    match config.experiment {
        ExperimentKind::Evolve => evolve_experiment(config, &psi0, &ctx, &mut sink)?,
        ExperimentKind::Trajectories => {
            let ensemble = assemble_ensemble(config, &ctx, &source)?;
            export_ensemble(config, &ensemble, &mut sink)?;
            if config.output.emit_svg {
                let fan = svg::trajectory_fan(ensemble.trajectories(), 100, &config.name);
                sink.write_svg("trajectories.svg", &fan)?;
            }
        }
        ExperimentKind::Equivariance => {
            let ensemble = assemble_ensemble(config, &ctx, &source)?;
            export_ensemble(config, &ensemble, &mut sink)?;
            equivariance_experiment(config, &ensemble, &ctx, &mut sink)?;
        }
        ExperimentKind::Perceptions => {
            let family = config
                .build_perceptions(&grid, base_dir)?
                .expect("validated");
            export_family(&family, &grid, &mut sink)?;
            let ensemble = maybe_ensemble(config, &ctx, &source)?;
            perceptions_experiment(config, &family, ensemble.as_ref(), &ctx, &mut sink)?;
        }
        ExperimentKind::Typicality => {
            let family = config
                .build_perceptions(&grid, base_dir)?
                .expect("validated");
            export_family(&family, &grid, &mut sink)?;
            let ensemble = maybe_ensemble(config, &ctx, &source)?;
            typicality_experiment(config, &family, ensemble.as_ref(), &ctx, &mut sink)?;
        }
        ExperimentKind::Compare => {
            let family = config
                .build_perceptions(&grid, base_dir)?
                .expect("validated");
            export_family(&family, &grid, &mut sink)?;
            let ensemble = maybe_ensemble(config, &ctx, &source)?;
            compare_experiment(config, &family, ensemble.as_ref(), &ctx, &mut sink)?;
        }
        ExperimentKind::SelectTrajectory => {
            let ensemble = assemble_ensemble(config, &ctx, &source)?;
            export_ensemble(config, &ensemble, &mut sink)?;
            select_experiment(config, &ensemble, &ctx, &mut sink)?;
        }
    }

    let seed = config.ensemble.as_ref().map(|e| e.seed);
    let manifest = sink.finish(seed, started.elapsed().as_secs_f64())?;
    Ok(RunOutcome {
        output_dir: config.output.directory.clone(),
        manifest,
    })
}

fn evolve_experiment(
    config: &ExperimentConfig,
    psi0: &bohmlab_core::Wavefunction,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let mut times = if config.output.times.is_empty() {
        vec![config.evolution.t_final]
    } else {
        config.output.times.clone()
    };
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let cfg = config.build_evolution_config(psi0.grid())?;
    let mut current = psi0.clone();
    let mut fields = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        current = evolve(&current, &config.potential, &cfg, t)?;
        sink.write_text(&format!("state_t{}.csv", i), |w| current.write_csv(w))?;
        sink.write_state_binary(&format!("state_t{}.bin", i), &current)?;
        fields.push((t, current.density()));
    }
    if config.output.emit_svg && ctx.grid().dims() == 1 {
        let plot = svg::density_plot(ctx.grid(), &fields, &config.name);
        sink.write_svg("density.svg", &plot)?;
    }
    Ok(())
}

fn build_policy(config: &ExperimentConfig, ctx: &EvolutionContext) -> Result<NodePolicy, RunnerError> {
    let horizon = config.evolution.t_final.max(config.evolution.dt);
    let defaults = NodePolicy::for_experiment(ctx, 0.0, horizon)?;
    let section = config.ensemble.as_ref().and_then(|e| e.node_policy.as_ref());
    let policy = match section {
        None => defaults,
        Some(np) => NodePolicy::new(
            np.node_epsilon.unwrap_or(defaults.node_epsilon),
            np.speed_cap.unwrap_or(defaults.speed_cap),
            np.substep_shrink.unwrap_or(defaults.substep_shrink),
            np.dt_min.unwrap_or(defaults.dt_min),
        )?,
    };
    Ok(policy)
}

fn assemble_ensemble(
    config: &ExperimentConfig,
    ctx: &EvolutionContext,
    source: &EnsembleSource,
) -> Result<Ensemble, RunnerError> {
    let section = config
        .ensemble
        .as_ref()
        .ok_or_else(|| RunnerError::Invalid("missing [ensemble] section".into()))?;
    let policy = build_policy(config, ctx)?;
    let ensemble = match source {
        EnsembleSource::Import(path) => {
            let file = std::fs::File::open(path).map_err(|e| RunnerError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            Ensemble::read_csv(
                BufReader::new(file),
                section.seed,
                section.density.label().to_string(),
            )?
        }
        EnsembleSource::Integrate => {
            let table = VelocityTable::new(ctx, policy.node_epsilon);
            let times = config
                .output_times()
                .ok_or_else(|| RunnerError::Invalid("missing ensemble output times".into()))?;
            let points = match config.explicit_points() {
                Some(points) => points,
                None => {
                    let n = section
                        .n
                        .ok_or_else(|| RunnerError::Invalid("missing sample count n".into()))?;
                    let density = section.density.values(ctx, 0.0)?;
                    sample_initial(ctx.grid(), &density, n, section.seed)?
                }
            };
            evolve_ensemble(
                &points,
                &times,
                &table,
                &policy,
                section.seed,
                section.density.label(),
            )?
        }
    };
    Ok(ensemble)
}

fn maybe_ensemble(
    config: &ExperimentConfig,
    ctx: &EvolutionContext,
    source: &EnsembleSource,
) -> Result<Option<Ensemble>, RunnerError> {
    if config.needs_ensemble() {
        Ok(Some(assemble_ensemble(config, ctx, source)?))
    } else {
        Ok(None)
    }
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    seed: u64,
    n: usize,
    density: &'a str,
    t_start: f64,
    t_end: f64,
    samples_per_trajectory: usize,
}

fn export_ensemble(
    config: &ExperimentConfig,
    ensemble: &Ensemble,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let dims = config.grid.points.len();
    sink.write_text("ensemble.csv", |w| ensemble.write_csv(w, dims))?;
    sink.write_json(
        "ensemble.json",
        &EnsembleSummary {
            seed: ensemble.seed(),
            n: ensemble.len(),
            density: ensemble.density_label(),
            t_start: ensemble.start_time(),
            t_end: ensemble.end_time(),
            samples_per_trajectory: ensemble.output_times().len(),
        },
    )
}

fn equivariance_experiment(
    config: &ExperimentConfig,
    ensemble: &Ensemble,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let times = if config.output.times.is_empty() {
        vec![config.evolution.t_final]
    } else {
        config.output.times.clone()
    };
    let report = equivariance_test(ensemble, ctx, &times)?;
    sink.write_json("equivariance.json", &report)?;
    let dims = config.grid.points.len();
    sink.write_text("equivariance.csv", |w| {
        writeln!(w, "{}", if dims == 1 { "t,d,threshold,pass" } else { "t,d_x,d_y,threshold,pass" })?;
        for e in &report.entries {
            write!(w, "{}", e.t)?;
            for d in &e.d {
                write!(w, ",{}", d)?;
            }
            writeln!(w, ",{},{}", e.threshold, e.pass)?;
        }
        Ok(())
    })
}

fn export_family(
    family: &PerceptionSet,
    grid: &bohmlab_core::Grid,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let text = crate::config::write_perception_file(family, grid.dims(), "perception family");
    sink.write_text("perceptions.toml", |w| w.write_all(text.as_bytes()))
}

/// Instantiated theory list: model, prior, and a label carrying the SBM
/// member index where applicable.
fn instantiate_theories<'a>(
    config: &ExperimentConfig,
    ensemble: Option<&'a Ensemble>,
) -> Result<Vec<(TheoryModel<'a>, f64, String)>, RunnerError> {
    let mut out = Vec::new();
    for th in &config.theories {
        let need_ens = || {
            ensemble.ok_or_else(|| {
                RunnerError::Invalid("theory needs an ensemble but none was built".into())
            })
        };
        let (model, label) = match th.kind {
            TheoryKind::Sqm => (TheoryModel::Sqm, "sqm".to_string()),
            TheoryKind::Scbm => (TheoryModel::Scbm(need_ens()?), "scbm".to_string()),
            TheoryKind::Gcbm => (TheoryModel::Gcbm(need_ens()?), "gcbm".to_string()),
            TheoryKind::Sbm => {
                let ens = need_ens()?;
                let index = th.trajectory_index.expect("validated");
                if index >= ens.len() {
                    return Err(RunnerError::Invalid(format!(
                        "sbm trajectory_index {} out of range (ensemble has {})",
                        index,
                        ens.len()
                    )));
                }
                (TheoryModel::Sbm(ens.trajectory(index)), format!("sbm_{}", index))
            }
        };
        out.push((model, th.prior, label));
    }
    Ok(out)
}

fn perceptions_experiment(
    config: &ExperimentConfig,
    family: &PerceptionSet,
    ensemble: Option<&Ensemble>,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let theories = instantiate_theories(config, ensemble)?;
    let mut rows: Vec<(String, String, MeasureDensity)> = Vec::new();
    for (model, _, label) in &theories {
        for p in family.perceptions() {
            let density = bohmlab_core::measure_density(p, model, ctx)?;
            rows.push((p.id.clone(), label.clone(), density));
        }
    }
    sink.write_text("measures.csv", |w| {
        writeln!(w, "id,theory,m,std_error")?;
        for (id, theory, d) in &rows {
            match d.std_error {
                Some(se) => writeln!(w, "{},{},{},{}", id, theory, d.mean, se)?,
                None => writeln!(w, "{},{},{},", id, theory, d.mean)?,
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct TypicalityArtifact {
    reports: Vec<TypicalityReport>,
}

fn typicality_experiment(
    config: &ExperimentConfig,
    family: &PerceptionSet,
    ensemble: Option<&Ensemble>,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let theories = instantiate_theories(config, ensemble)?;
    let mut reports = Vec::new();
    for (model, _, label) in &theories {
        let mut report = typicality(family, model, ctx)?;
        report.theory = label.clone();
        reports.push(report);
    }
    sink.write_text("typicality.csv", |w| {
        writeln!(w, "id,theory,m,typicality")?;
        for report in &reports {
            for e in &report.entries {
                writeln!(w, "{},{},{},{}", e.id, report.theory, e.m, e.typicality)?;
            }
        }
        Ok(())
    })?;
    sink.write_json("typicality.json", &TypicalityArtifact { reports })?;

    // the SCBM vs SQM agreement experiment, with a few ensemble members
    // showcased as single-trajectory SBM theories
    if let (Some(ens), true) = (
        ensemble,
        config
            .theories
            .iter()
            .any(|t| matches!(t.kind, TheoryKind::Scbm)),
    ) {
        let count = config.inference.sbm_samples.min(ens.len());
        let indices: Vec<usize> = (0..count).collect();
        let agreement = typicality_agreement_experiment(family, ctx, ens, &indices)?;
        sink.write_json("agreement.json", &agreement)?;
    }
    Ok(())
}

fn compare_experiment(
    config: &ExperimentConfig,
    family: &PerceptionSet,
    ensemble: Option<&Ensemble>,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let observed = config
        .inference
        .observed
        .as_ref()
        .expect("validated")
        .clone();
    let theories = instantiate_theories(config, ensemble)?;
    let pairs: Vec<(TheoryModel, f64)> = theories
        .iter()
        .map(|(model, prior, _)| (*model, *prior))
        .collect();
    let mut comparison = compare_theories(&observed, family, &pairs, ctx)?;
    for (row, (_, _, label)) in comparison.rows.iter_mut().zip(&theories) {
        row.theory = label.clone();
    }
    sink.write_text("comparison.csv", |w| {
        writeln!(w, "theory,prior,likelihood,posterior")?;
        for r in &comparison.rows {
            writeln!(w, "{},{},{},{}", r.theory, r.prior, r.likelihood, r.posterior)?;
        }
        Ok(())
    })?;
    sink.write_json("comparison.json", &comparison)
}

#[derive(Serialize)]
struct SelectionArtifact {
    index: usize,
    path_density_integral: f64,
    seed_position: Vec<f64>,
}

fn select_experiment(
    config: &ExperimentConfig,
    ensemble: &Ensemble,
    ctx: &EvolutionContext,
    sink: &mut ArtifactSink,
) -> Result<(), RunnerError> {
    let integrals = path_density_integrals(ensemble, ctx)?;
    let (index, value) = select_max_density_trajectory(ensemble, ctx)?;
    sink.write_text("path_integrals.csv", |w| {
        writeln!(w, "traj_id,integral")?;
        for (id, v) in integrals.iter().enumerate() {
            writeln!(w, "{},{}", id, v)?;
        }
        Ok(())
    })?;
    let dims = config.grid.points.len();
    sink.write_json(
        "selection.json",
        &SelectionArtifact {
            index,
            path_density_integral: value,
            seed_position: ensemble
                .trajectory(index)
                .seed_position()
                .coords(dims)
                .to_vec(),
        },
    )
}

/// Convenience probe used by the acceptance suite: SQM weight of every
/// perception in a family.
pub fn sqm_profile(
    family: &PerceptionSet,
    ctx: &EvolutionContext,
) -> Result<Vec<f64>, RunnerError> {
    family
        .perceptions()
        .iter()
        .map(|p| Ok(sqm_measure_density(p, ctx)?))
        .collect()
}
