use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use dentsim::calibration::CalibrationConfig;
use dentsim::compare::{compare_metrics, synthetic_expert_ratings, CompareOptions};
use dentsim::drill::{replay, DrillScript};
use dentsim::exec::Execution;
use dentsim::field::{build_field_with, sample_field, GridSpec, MetaballKernel, REFERENCE_DIMS};
use dentsim::fixture::{plunge_script, small_tooth, synthetic_outcomes, AccessCavity};
use dentsim::gaze::{
    mean_eye_tooth_distance, read_gaze_logs, screen_share, synthetic_gaze_log, trial_stats,
    write_gaze_logs, write_trial_csv, HmdConfig, TrialGazeLog,
};
use dentsim::mesh::TriangleMesh;
use dentsim::scoring::{
    read_expert_ratings, score_outcomes, write_batch_csv, write_expert_ratings, ExpertRating,
    ScoreReport,
};
use dentsim::study::{
    apply_trial_scores, read_study_csv, read_trial_csv, reconstructed_study, study_report,
    write_study_csv,
};
use dentsim::volume::{SpherePackVolume, Tissue};
use dentsim::voxel::VoxelGrid;
use dentsim::{KappaWeighting, Tails};
use serde::Serialize;

use crate::manifest::{Inputs, Options, RunManifest};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("no {what} given (flag, manifest or --dir)"))
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_tooth(path: &Path) -> Result<SpherePackVolume> {
    SpherePackVolume::read_json(open(path)?).with_context(|| format!("reading tooth {}", path.display()))
}

fn read_grid(path: &Path) -> Result<VoxelGrid> {
    VoxelGrid::read_json(open(path)?).with_context(|| format!("reading voxel grid {}", path.display()))
}

fn read_script(path: &Path) -> Result<DrillScript> {
    DrillScript::read_text(open(path)?).with_context(|| format!("reading drill script {}", path.display()))
}

fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    TriangleMesh::read_ply(open(path)?).with_context(|| format!("reading mesh {}", path.display()))
}

fn kernel(o: &Options) -> Result<MetaballKernel> {
    let d = MetaballKernel::default();
    Ok(MetaballKernel::new(
        o.kernel_support.unwrap_or(d.support_scale),
        o.iso.unwrap_or(d.iso_level),
    )?)
}

#[derive(Debug, Serialize)]
struct VoxelSummary {
    occupied: usize,
    enamel: usize,
    dentin: usize,
    pulp: usize,
    vertices: usize,
    triangles: usize,
    watertight: bool,
    euler_characteristic: i64,
}

fn summarize(grid: &VoxelGrid, mesh: &TriangleMesh) -> VoxelSummary {
    VoxelSummary {
        occupied: grid.occupied_count(),
        enamel: grid.tissue_count(Tissue::Enamel),
        dentin: grid.tissue_count(Tissue::Dentin),
        pulp: grid.tissue_count(Tissue::Pulp),
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        watertight: mesh.is_watertight(),
        euler_characteristic: mesh.euler_characteristic(),
    }
}

/// Grid fitted to the whole tooth. Removed spheres still count, so every
/// drilled state of one tooth shares the grid of the pristine tooth.
fn tooth_grid(volume: &SpherePackVolume, o: &Options) -> Result<(MetaballKernel, GridSpec)> {
    let k = kernel(o)?;
    let grid = GridSpec::fitted(volume, &k, o.grid.unwrap_or(REFERENCE_DIMS))?;
    Ok((k, grid))
}

fn discretize(volume: &SpherePackVolume, k: MetaballKernel, grid: &GridSpec, exec: Execution) -> Result<(VoxelGrid, TriangleMesh)> {
    let start = Instant::now();
    let field = build_field_with(volume, k)?;
    let sampled = sample_field(&field, grid, exec);
    let voxels = sampled.voxel_grid();
    let mesh = sampled.mesh(exec);
    eprintln!(
        "discretized {} live spheres on {:?} in {:.1} ms",
        volume.live_count(),
        grid.dims,
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok((voxels, mesh))
}

pub fn voxelize(m: &RunManifest, exec: Execution) -> Result<()> {
    let out = m.prepare_output()?.ok_or_else(|| anyhow!("voxelize needs an output directory (--out)"))?;
    let volume = read_tooth(required(&m.inputs.tooth, "tooth file")?)?;
    let (k, grid) = tooth_grid(&volume, &m.options)?;
    let (voxels, mesh) = discretize(&volume, k, &grid, exec)?;
    let mut w = create(&out.join("grid.json"))?;
    voxels.write_json(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("mesh.ply"))?;
    mesh.write_ply(&mut w)?;
    w.flush()?;
    print_json(&summarize(&voxels, &mesh))
}

#[derive(Debug, Serialize)]
struct ReplaySummary {
    script: String,
    removed_spheres: usize,
    occupied: usize,
}

pub fn drill_replay(m: &RunManifest, exec: Execution, meshes: bool) -> Result<()> {
    let out = m.prepare_output()?.ok_or_else(|| anyhow!("drill-replay needs an output directory (--out)"))?;
    if m.inputs.scripts.is_empty() {
        bail!("no drill scripts given (--script, manifest or --dir)");
    }
    let tooth = read_tooth(required(&m.inputs.tooth, "tooth file")?)?;
    let (k, grid) = tooth_grid(&tooth, &m.options)?;
    let mut summaries = Vec::new();
    for path in &m.inputs.scripts {
        let script = read_script(path)?;
        let mut volume = tooth.clone();
        let removed: usize = replay(&mut volume, &script)?.iter().sum();
        let (voxels, mesh) = discretize(&volume, k, &grid, exec)?;
        let name = stem(path);
        let mut w = create(&out.join("outcomes").join(format!("{name}.json")))?;
        voxels.write_json(&mut w)?;
        w.flush()?;
        if meshes {
            let mut w = create(&out.join("meshes").join(format!("{name}.ply")))?;
            mesh.write_ply(&mut w)?;
            w.flush()?;
        }
        summaries.push(ReplaySummary {
            script: name,
            removed_spheres: removed,
            occupied: voxels.occupied_count(),
        });
    }
    print_json(&summaries)
}

fn score_inputs(m: &RunManifest, exec: Execution) -> Result<Vec<ScoreReport>> {
    if m.inputs.outcomes.is_empty() {
        bail!("no outcome grids given (--outcome, manifest or --dir)");
    }
    let pristine = read_grid(required(&m.inputs.pristine, "pristine grid")?)?;
    let ideal = read_grid(required(&m.inputs.ideal, "ideal grid")?)?;
    let outcomes = m
        .inputs
        .outcomes
        .iter()
        .map(|p| Ok((stem(p), read_grid(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let reports = score_outcomes(&outcomes, &ideal, &pristine, exec)?;
    eprintln!("scored {} outcomes in {:.1} ms", reports.len(), start.elapsed().as_secs_f64() * 1e3);
    for r in &reports {
        if r.dentist.is_some_and(|d| d.out_of_range) {
            eprintln!("note: {} has a Dentist score outside [0, 15]", r.outcome_id);
        }
    }
    Ok(reports)
}

pub fn score(m: &RunManifest, exec: Execution) -> Result<()> {
    let reports = score_inputs(m, exec)?;
    match m.prepare_output()? {
        Some(out) => {
            write_json(&out.join("scores.json"), &reports)?;
            let mut w = create(&out.join("scores.csv"))?;
            write_batch_csv(&reports, &mut w)?;
            w.flush()?;
            Ok(())
        }
        None => Ok(write_batch_csv(&reports, io::stdout().lock())?),
    }
}

/// Expert ratings, or `None` with a notice when the file has no
/// `error_score` column.
fn read_experts(path: &Path) -> Result<Option<Vec<ExpertRating>>> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let header = text.lines().next().unwrap_or("");
    if !header.split(',').any(|h| h.trim() == "error_score") {
        eprintln!("notice: {} has no error_score column; expert correlation skipped", path.display());
        return Ok(None);
    }
    Ok(Some(read_expert_ratings(text.as_bytes()).with_context(|| format!("reading {}", path.display()))?))
}

pub fn compare(m: &RunManifest, exec: Execution, select_by: Option<String>, agreement_metric: Option<String>) -> Result<()> {
    let reports: Vec<ScoreReport> = match &m.inputs.scores {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("reading scores {}", p.display()))?,
        None => score_inputs(m, exec)?,
    };
    let experts = match &m.inputs.experts {
        Some(p) => read_experts(p)?,
        None => {
            eprintln!("notice: no expert ratings; correlation and agreement skipped");
            None
        }
    };
    let d = CompareOptions::default();
    let options = CompareOptions {
        k: m.options.k.unwrap_or(d.k),
        selection_metric: select_by.unwrap_or(d.selection_metric),
        agreement_metric: agreement_metric.unwrap_or(d.agreement_metric),
        kappa_weighting: m.options.kappa_weighting.unwrap_or(d.kappa_weighting),
    };
    let mut cmp = compare_metrics(&reports, experts.as_deref(), &options)?;
    if let Some(keep) = &m.options.metrics {
        cmp.metrics.retain(|s| keep.contains(&s.name));
        cmp.ranking.retain(|n| keep.contains(n));
    }
    for s in &cmp.metrics {
        if let Some(e) = &s.normality_error {
            eprintln!("notice: {}: normality not computed: {e}", s.name);
        }
    }
    if let Some(e) = &cmp.selection_error {
        eprintln!("notice: coverage selection not computed: {e}");
    }
    match m.prepare_output()? {
        Some(out) => write_json(&out.join("comparison.json"), &cmp),
        None => print_json(&cmp),
    }
}

pub fn calibrate(m: &RunManifest, json: bool) -> Result<()> {
    let path = required(&m.inputs.calibration, "calibration config")?;
    let config = CalibrationConfig::read_json(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    let audit = config.audit()?;
    if let Some(out) = m.prepare_output()? {
        write_json(&out.join("calibration_audit.json"), &audit)?;
    }
    if json {
        return print_json(&audit);
    }
    let c = &audit.chain;
    let fmt = |p: &dentsim::Pose| {
        format!(
            "position ({}, {}, {}) cm, orientation ({}, {}, {}) deg",
            p.position.x, p.position.y, p.position.z, p.orientation.x, p.orientation.y, p.orientation.z
        )
    };
    let mut out = io::stdout().lock();
    writeln!(out, "mirror origin      {}", fmt(&c.mirror))?;
    writeln!(out, "target controller  {}", fmt(&c.target))?;
    writeln!(out, "measured           {}", fmt(&c.measured))?;
    writeln!(out, "camera correction  {}", fmt(&c.camera_delta))?;
    writeln!(out, "corrected          {}", fmt(&c.corrected))?;
    writeln!(out, "residual           {} cm, {} deg", c.residual_cm, c.residual_deg)?;
    if c.euler_sum_gap_deg > 1e-6 {
        eprintln!(
            "note: adding angles componentwise differs from composing the rotations by {:.3} deg",
            c.euler_sum_gap_deg
        );
    }
    if let Some(p) = &audit.misaligned_mirror {
        writeln!(out, "misaligned mirror  {}", fmt(p))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GazeSummary {
    trials: Vec<dentsim::gaze::TrialGazeStats>,
    /// Mean over trials with hits.
    mean_distance: Option<f64>,
    extent: Option<f64>,
    footprint: Option<dentsim::gaze::ScreenShare>,
}

pub struct GazeArgs {
    pub extent: Option<f64>,
    pub hmd: HmdConfig,
}

pub fn gaze_stats(m: &RunManifest, exec: Execution, args: GazeArgs) -> Result<()> {
    if m.inputs.gaze_logs.is_empty() {
        bail!("no gaze logs given (--log, manifest or --dir)");
    }
    let mut logs: Vec<TrialGazeLog> = Vec::new();
    for p in &m.inputs.gaze_logs {
        logs.extend(read_gaze_logs(open(p)?).with_context(|| format!("reading gaze log {}", p.display()))?);
    }
    let mut extent = args.extent;
    if let Some(p) = &m.inputs.mesh {
        let scale = m.options.mesh_scale.unwrap_or(1.0);
        let mesh = read_mesh(p)?.scaled(scale);
        if mesh.is_empty() {
            bail!("mesh {} has no triangles", p.display());
        }
        logs = logs
            .iter()
            .map(|l| l.with_hits_from(&mesh, exec))
            .collect::<dentsim::Result<_>>()?;
        if extent.is_none() {
            let (lo, hi) = mesh.vertices.iter().fold(
                (nalgebra::Vector3::repeat(f64::INFINITY), nalgebra::Vector3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), v| (lo.inf(v), hi.sup(v)),
            );
            let size = hi - lo;
            extent = Some(size.x.max(size.z));
        }
    }
    let stats: Vec<_> = logs.iter().map(trial_stats).collect();
    for s in &stats {
        if s.mean_distance.is_none() {
            eprintln!("notice: trial {} has no fixation on the tooth", s.trial_id);
        }
    }
    let distances: Vec<f64> = logs.iter().filter_map(|l| mean_eye_tooth_distance(l).ok()).collect();
    let mean_distance = (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64);
    let footprint = match (extent, mean_distance) {
        (Some(e), Some(d)) => Some(screen_share(e, d, &args.hmd)?),
        _ => None,
    };
    if let Some(f) = &footprint {
        eprintln!(
            "footprint {:.1} px square: {:.3}% of one eye, {:.3}% of both",
            f.pixels,
            100.0 * f.per_eye,
            100.0 * f.combined
        );
    }
    match m.prepare_output()? {
        Some(out) => {
            let mut w = create(&out.join("gaze_trials.csv"))?;
            write_trial_csv(&stats, &mut w)?;
            w.flush()?;
            write_json(
                &out.join("gaze_summary.json"),
                &GazeSummary {
                    trials: stats,
                    mean_distance,
                    extent,
                    footprint,
                },
            )
        }
        None => Ok(write_trial_csv(&stats, io::stdout().lock())?),
    }
}

pub fn study(m: &RunManifest) -> Result<()> {
    let path = required(&m.inputs.study, "study table")?;
    let (mut records, skipped) = read_study_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    for s in &skipped {
        eprintln!("notice: {}:{}: skipped row: {}", path.display(), s.line, s.reason);
    }
    if let Some(t) = &m.inputs.trials {
        let trials = read_trial_csv(open(t)?).with_context(|| format!("reading {}", t.display()))?;
        let n = apply_trial_scores(&mut records, &trials)?;
        eprintln!("applied {n} trial scores from {}", t.display());
    }
    let mut report = study_report(&records, m.options.tails.unwrap_or(Tails::Less))?;
    report.skipped_rows = skipped;
    for n in &report.notes {
        eprintln!("notice: {n}");
    }
    match m.prepare_output()? {
        Some(out) => write_json(&out.join("study_report.json"), &report),
        None => print_json(&report),
    }
}

pub struct FixtureArgs {
    pub out: PathBuf,
    pub spheres: usize,
    pub outcomes: usize,
    pub raters: usize,
    pub gaze_trials: usize,
}

/// Writes a complete, self-consistent input set laid out by the naming
/// convention, plus a manifest describing it.
pub fn fixture(args: FixtureArgs, options: &Options, exec: Execution) -> Result<()> {
    let seed = options.seed.unwrap_or(1);
    let out = &args.out;
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let tooth = small_tooth(args.spheres, seed)?;
    eprintln!("packed {} spheres in {:.0} ms", tooth.len(), start.elapsed().as_secs_f64() * 1e3);
    let mut w = create(&out.join("tooth.json"))?;
    tooth.write_json(&mut w)?;
    w.flush()?;

    let (k, grid) = tooth_grid(&tooth, options)?;
    let (pristine, mesh) = discretize(&tooth, k, &grid, exec)?;
    let ideal = AccessCavity::reference().carve(&pristine);
    for (name, g) in [("pristine.json", &pristine), ("ideal.json", &ideal)] {
        let mut w = create(&out.join(name))?;
        g.write_json(&mut w)?;
        w.flush()?;
    }
    let mut w = create(&out.join("mesh.ply"))?;
    mesh.write_ply(&mut w)?;
    w.flush()?;

    let bur = 0.6;
    for (name, script) in [
        ("plunge.txt", plunge_script(11.0, bur)),
        ("cavity.txt", AccessCavity::reference().raster_script(bur)),
    ] {
        let mut w = create(&out.join("scripts").join(name))?;
        script.write_text(&mut w)?;
        w.flush()?;
    }

    let width = args.outcomes.max(1).to_string().len();
    let outcomes: Vec<(String, VoxelGrid)> = synthetic_outcomes(&pristine, args.outcomes, seed)
        .into_iter()
        .enumerate()
        .map(|(i, g)| (format!("o{:0width$}", i + 1), g))
        .collect();
    for (id, g) in &outcomes {
        let mut w = create(&out.join("outcomes").join(format!("{id}.json")))?;
        g.write_json(&mut w)?;
        w.flush()?;
    }
    let reports = score_outcomes(&outcomes, &ideal, &pristine, exec)?;
    let experts = synthetic_expert_ratings(&reports, args.raters, 1.0, seed);
    let mut w = create(&out.join("experts.csv"))?;
    write_expert_ratings(&experts, &mut w)?;
    w.flush()?;

    let mut w = create(&out.join("study.csv"))?;
    write_study_csv(&reconstructed_study(), &mut w)?;
    w.flush()?;

    // Tooth dimensions are in millimetres, gaze in centimetres.
    let mesh_scale = 0.1;
    let mesh_cm = mesh.scaled(mesh_scale);
    for t in 0..args.gaze_trials {
        let distance = 18.0 + 2.0 * t as f64;
        let log = synthetic_gaze_log(&mesh_cm, &format!("trial{}", t + 1), 60, distance, seed + t as u64);
        let mut w = create(&out.join("gaze").join(format!("trial{}.txt", t + 1)))?;
        write_gaze_logs(&[log], &mut w)?;
        w.flush()?;
    }

    let calibration = serde_json::json!({
        "mirror_origin": {"position": [0.0, 0.0, 0.0], "orientation": [0.0, 0.0, 0.0]},
        "drill_origin": {"position": [0.0, 0.0, 30.0], "orientation": [0.0, 0.0, 0.0]},
        "offset": {"translation": [22.0, 26.0, -7.0], "rotation": [0.0, 0.0, 90.0]},
        "measured": {"position": [20.5, 24.0, -6.0], "orientation": [1.5, -2.0, 84.0]},
        "frame": {"down": "-z", "forward": "+x"},
        "misalignment": {"down": 20.0, "forward": 50.0}
    });
    write_json(&out.join("calibration.json"), &calibration)?;

    let manifest = RunManifest {
        inputs: Inputs::default(),
        output_dir: Some("results".into()),
        options: Options {
            grid: Some(grid.dims),
            iso: Some(k.iso_level),
            kernel_support: Some(k.support_scale),
            kappa_weighting: Some(KappaWeighting::Linear),
            tails: Some(Tails::Less),
            k: Some(options.k.unwrap_or(20)),
            seed: Some(seed),
            mesh_scale: Some(mesh_scale),
            metrics: None,
        },
    };
    manifest.write_json(&out.join("manifest.json"))?;
    eprintln!("fixture written to {}", out.display());
    Ok(())
}
