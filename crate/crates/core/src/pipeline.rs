//! Batch subcommands behind the command-line tool.
//!
//! Every subcommand reads a validated [`ExperimentConfig`], writes its
//! outputs atomically under the output directory and stamps each file's
//! sidecar with the master seed and the config hash. Outputs contain no
//! timestamps or host details, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advise::{advise, RunSummaries};
use crate::cells::{flatten, group_into_sections, percentile_sorted, type_labels, CellRecord, SectionTable};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluation::{all_offsets, evaluate, histogram, ReferenceStack};
use crate::io::{self, fmt_f64, fmt_opt, schema, Meta};
use crate::lattice::MrfParams;
use crate::matching::{infer_delta_z, reconstruct, Reconstruction};
use crate::mple::{fit, recovery_error};
use crate::rng::derive_seed;
use crate::sampling::{Geometry, ObservationSet};
use crate::spatial_stats::{
    abundance, detectability, neighborhood_enrichment, sections_from_volume, stability_from_outcomes,
};
use crate::structures::{
    along_structure_profile, build_structures, compare_distances, default_link_radius, DistanceTarget,
    Structure3D,
};
use crate::study::{observe, simulate_volume, summarize, RecoveryStudy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Sample,
    Estimate,
    Stats,
    Reconstruct,
    Evaluate,
    Structures,
    Advise,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub out_dir: PathBuf,
    /// Directories searched (in order, then `out_dir`) for upstream outputs.
    pub inputs: Vec<PathBuf>,
    /// Cell table overriding `cells.csv` from the inputs.
    pub cells: Option<PathBuf>,
}

/// What a subcommand produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Streams split off the master seed.
pub mod streams {
    pub const DETECTABILITY: u64 = 10;
    pub const ENRICHMENT: u64 = 11;
}

pub const VOLUME_MANIFEST: &str = "volumes.json";
pub const OBSERVATIONS: &str = "observations.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEntry {
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    pub volumes: Vec<VolumeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub seed: u64,
    pub geometry: Geometry,
    /// Volume file, relative to the manifest's directory.
    pub volume: String,
    pub plane_zs: Vec<usize>,
    pub delta_z: Option<usize>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationManifest {
    pub observations: Vec<ObservationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub seed: u64,
    pub geometry: Geometry,
    pub params: MrfParams,
    pub converged: bool,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub objective: f64,
}

struct Ctx<'a> {
    opts: &'a RunOptions,
    report: RunReport,
}

impl<'a> Ctx<'a> {
    fn cfg(&self) -> &ExperimentConfig {
        &self.opts.config
    }

    fn meta(&self, schema_name: &str) -> Meta {
        Meta::new(schema_name, Some(self.opts.config.seed), Some(&self.opts.config_hash))
    }

    fn out(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.opts.out_dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.report.outputs.push(p.clone());
        Ok(p)
    }

    fn find(&self, name: &str) -> Option<PathBuf> {
        self.opts
            .inputs
            .iter()
            .chain(std::iter::once(&self.opts.out_dir))
            .map(|d| d.join(name))
            .find(|p| p.exists())
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        self.find(name).ok_or_else(|| {
            Error::InvalidInput(format!("{name} not found; run `{producer}` first or pass --input"))
        })
    }

    fn cells(&self) -> Result<Vec<CellRecord>> {
        let path = match &self.opts.cells {
            Some(p) => p.clone(),
            None => self.require("cells.csv", "--cells <path>")?,
        };
        io::read_cells(&path)
    }
}

fn missing_block(name: &str) -> Error {
    Error::Config(format!("this subcommand needs a [{name}] block"))
}

fn study(cfg: &ExperimentConfig) -> Result<RecoveryStudy> {
    let sim = cfg.simulation.as_ref().ok_or_else(|| missing_block("simulation"))?;
    let (planes, serial_delta_z, geometries) = match &cfg.sampling {
        Some(s) => (s.planes, s.serial_delta_z, s.geometries.clone()),
        None => (1, 1, Vec::new()),
    };
    Ok(RecoveryStudy {
        dims: sim.dims,
        neighborhood: sim.neighborhood,
        truth: sim.params()?,
        sweeps: sim.sweeps,
        planes,
        serial_delta_z,
        seeds: sim.seeds.clone(),
        mple: cfg.estimation,
        geometries,
    })
}

/// Runs one subcommand.
pub fn run_pipeline(opts: &RunOptions) -> Result<RunReport> {
    opts.config.validate()?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let mut ctx = Ctx {
        opts,
        report: RunReport::default(),
    };
    match opts.command {
        Command::Simulate => run_simulate(&mut ctx)?,
        Command::Sample => run_sample(&mut ctx)?,
        Command::Estimate => run_estimate(&mut ctx)?,
        Command::Stats => run_stats(&mut ctx)?,
        Command::Reconstruct => run_reconstruct(&mut ctx)?,
        Command::Evaluate => run_evaluate(&mut ctx)?,
        Command::Structures => run_structures(&mut ctx)?,
        Command::Advise => run_advise(&mut ctx)?,
    }
    Ok(ctx.report)
}

fn run_simulate(ctx: &mut Ctx) -> Result<()> {
    let st = study(ctx.cfg())?;
    let volumes: Vec<_> = {
        use rayon::prelude::*;
        st.seeds
            .par_iter()
            .map(|&s| simulate_volume(&st, s).map(|v| (s, v)))
            .collect::<Result<_>>()?
    };
    let mut manifest = VolumeManifest { volumes: Vec::new() };
    for (seed, vol) in &volumes {
        let rel = format!("volumes/volume_{seed}.labels");
        let path = ctx.out(&rel)?;
        io::write_volume(&path, vol, Some(st.sweeps), Some(&st.truth), &ctx.meta(schema::VOLUME))?;
        manifest.volumes.push(VolumeEntry { seed: *seed, path: rel });
    }
    let path = ctx.out(VOLUME_MANIFEST)?;
    io::write_json(&path, &manifest, &ctx.meta(schema::JSON))
}

fn load_volume_manifest(ctx: &Ctx) -> Result<(PathBuf, VolumeManifest)> {
    let path = ctx.require(VOLUME_MANIFEST, "simulate")?;
    let m: VolumeManifest = io::read_json(&path)?;
    Ok((path.parent().unwrap_or(Path::new(".")).to_path_buf(), m))
}

fn run_sample(ctx: &mut Ctx) -> Result<()> {
    let st = study(ctx.cfg())?;
    if ctx.cfg().sampling.is_none() {
        return Err(missing_block("sampling"));
    }
    let (base, manifest) = load_volume_manifest(ctx)?;
    let mut entries = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for v in &manifest.volumes {
        let (vol, _) = io::read_volume(&base.join(&v.path))?;
        for &g in &st.geometries {
            let obs = observe(&st, &vol, g, v.seed)?;
            for &z in &obs.plane_zs {
                rows.push(vec![
                    v.seed.to_string(),
                    g.as_str().to_string(),
                    z.to_string(),
                    obs.budget.to_string(),
                ]);
            }
            entries.push(ObservationEntry {
                seed: v.seed,
                geometry: g,
                volume: v.path.clone(),
                plane_zs: obs.plane_zs,
                delta_z: obs.delta_z,
                budget: obs.budget,
            });
        }
    }
    // volume paths relative to the new manifest when possible, else absolute
    let canon = |p: &Path| std::fs::canonicalize(p).map_err(|e| Error::io(p, e));
    let out_dir = canon(&ctx.opts.out_dir)?;
    for e in &mut entries {
        let abs = canon(&base.join(&e.volume))?;
        e.volume = match abs.strip_prefix(&out_dir) {
            Ok(rel) => rel.to_string_lossy().into_owned(),
            Err(_) => abs.to_string_lossy().into_owned(),
        };
    }
    let path = ctx.out(OBSERVATIONS)?;
    io::write_json(
        &path,
        &ObservationManifest { observations: entries },
        &ctx.meta(schema::JSON),
    )?;
    let path = ctx.out("observed_planes.csv")?;
    io::write_csv(
        &path,
        &["seed", "geometry", "plane_z", "budget"],
        &rows,
        &ctx.meta(schema::OBSERVATION_SITES),
    )
}

fn run_estimate(ctx: &mut Ctx) -> Result<()> {
    let path = ctx.require(OBSERVATIONS, "sample")?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest: ObservationManifest = io::read_json(&path)?;
    let cfg_truth = ctx.cfg().simulation.as_ref().map(|s| s.params()).transpose()?;
    let mple = ctx.cfg().estimation;

    let mut cache: BTreeMap<String, (crate::lattice::LabelVolume, Option<MrfParams>)> = BTreeMap::new();
    for e in &manifest.observations {
        if !cache.contains_key(&e.volume) {
            let (vol, header) = io::read_volume(&base.join(&e.volume))?;
            cache.insert(e.volume.clone(), (vol, header.params));
        }
    }
    let fits: Vec<_> = {
        use rayon::prelude::*;
        manifest
            .observations
            .par_iter()
            .map(|e| {
                let (vol, header_truth) = &cache[&e.volume];
                let truth = header_truth
                    .clone()
                    .or_else(|| cfg_truth.clone())
                    .ok_or_else(|| Error::Config("no generating parameters for the recovery error".into()))?;
                let obs = ObservationSet::from_plane_list(vol.spec(), e.geometry, e.plane_zs.clone(), e.delta_z)?;
                let fitted = fit(&obs, vol, truth.k(), &mple)?;
                let report = recovery_error(&fitted.params, &truth)?.for_trial(e.geometry, e.seed, obs.budget);
                Ok((e, fitted, report))
            })
            .collect::<Result<_>>()?
    };

    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    let mut estimates = Vec::new();
    for (e, fitted, report) in fits {
        if !fitted.converged {
            warnings.push(format!(
                "seed {} {}: optimiser stopped after {} iterations (gradient norm {:.3e})",
                e.seed, e.geometry, fitted.iterations, fitted.grad_inf_norm
            ));
        }
        if !report.mae_alpha.is_finite() || !report.mae_b.is_finite() {
            return Err(Error::Numeric(format!("non-finite recovery error for seed {}", e.seed)));
        }
        reports.push(report);
        estimates.push(EstimateEntry {
            seed: e.seed,
            geometry: e.geometry,
            params: fitted.params,
            converged: fitted.converged,
            iterations: fitted.iterations,
            grad_inf_norm: fitted.grad_inf_norm,
            objective: fitted.objective,
        });
    }
    ctx.report.warnings.extend(warnings.iter().cloned());

    let mut meta = ctx.meta(schema::RECOVERY);
    meta.warnings = warnings;
    let path = ctx.out("recovery.csv")?;
    io::write_recovery(&path, &reports, &meta)?;

    let summary = summarize(&reports);
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.geometry.as_str().to_string(),
                s.trials.to_string(),
                fmt_f64(s.median_mae_alpha),
                fmt_f64(s.median_mae_b),
                fmt_f64(s.iqr_mae_b),
                fmt_f64(s.var_mae_b),
                fmt_f64(s.mean_rmse_alpha),
                fmt_f64(s.mean_rmse_b),
            ]
        })
        .collect();
    let path = ctx.out("recovery_summary.csv")?;
    io::write_csv(&path, &RECOVERY_SUMMARY_HEADER, &rows, &meta.with_schema(schema::RECOVERY_SUMMARY))?;
    let path = ctx.out("estimates.json")?;
    io::write_json(&path, &estimates, &meta.with_schema(schema::JSON))
}

pub const RECOVERY_SUMMARY_HEADER: [&str; 8] = [
    "geometry",
    "trials",
    "median_mae_alpha",
    "median_mae_B",
    "iqr_mae_B",
    "var_mae_B",
    "mean_rmse_alpha",
    "mean_rmse_B",
];

pub const STABILITY_SUMMARY_HEADER: [&str; 6] = [
    "target",
    "partner",
    "n_sections",
    "iqr",
    "frac_abs_z_above_2",
    "spread_undefined",
];

fn stats_sections(ctx: &Ctx) -> Result<Vec<SectionTable>> {
    if ctx.opts.cells.is_some() || ctx.find("cells.csv").is_some() {
        return group_into_sections(ctx.cells()?);
    }
    let (base, manifest) = load_volume_manifest(ctx)?;
    let first = manifest
        .volumes
        .first()
        .ok_or_else(|| Error::InvalidInput("volume manifest is empty".into()))?;
    let (vol, _) = io::read_volume(&base.join(&first.path))?;
    let pitch = ctx.cfg().stats.as_ref().map_or(1.0, |s| s.voxel_um);
    Ok(sections_from_volume(&vol, pitch))
}

fn run_stats(ctx: &mut Ctx) -> Result<()> {
    let sc = ctx.cfg().stats.clone().ok_or_else(|| missing_block("stats"))?;
    let seed = ctx.cfg().seed;
    let sections = stats_sections(ctx)?;
    let all = flatten(&sections);
    let types = type_labels(&all);
    let mut warnings = Vec::new();

    let mut rows = Vec::new();
    for (t, f) in abundance(&all)? {
        rows.push(vec!["all".to_string(), t, fmt_f64(f)]);
    }
    for s in &sections {
        if s.cells.is_empty() {
            continue;
        }
        for (t, f) in abundance(&s.cells)? {
            rows.push(vec![s.section_index.to_string(), t, fmt_f64(f)]);
        }
    }
    let path = ctx.out("abundance.csv")?;
    io::write_csv(&path, &["section", "type", "fraction"], &rows, &ctx.meta(schema::ABUNDANCE))?;

    let m = if sc.m > sections.len() {
        warnings.push(format!(
            "stats.m = {} exceeds the {} available sections; using {}",
            sc.m,
            sections.len(),
            sections.len()
        ));
        sections.len()
    } else {
        sc.m
    };
    let det_seed = derive_seed(seed, streams::DETECTABILITY);
    let rows = types
        .iter()
        .map(|t| {
            let p = detectability(&sections, t, m, sc.k, sc.trials, det_seed)?;
            Ok(vec![t.clone(), m.to_string(), sc.k.to_string(), sc.trials.to_string(), fmt_f64(p)])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = ctx.meta(schema::DETECTABILITY);
    meta.warnings = warnings.clone();
    let path = ctx.out("detectability.csv")?;
    io::write_csv(&path, &["type", "M", "k", "trials", "fraction"], &rows, &meta)?;

    let target = match &sc.target_type {
        Some(t) => t.clone(),
        None => types
            .first()
            .cloned()
            .ok_or_else(|| Error::InvalidInput("no cells for enrichment".into()))?,
    };
    let enr_seed = derive_seed(seed, streams::ENRICHMENT);
    let outcomes: Vec<_> = {
        use rayon::prelude::*;
        sections
            .par_iter()
            .map(|s| neighborhood_enrichment(s, &target, sc.radius, sc.n_permutations, enr_seed))
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for o in &outcomes {
        for r in &o.results {
            rows.push(vec![
                o.section_index.to_string(),
                r.target_type.clone(),
                r.partner_type.clone(),
                r.observed_count.to_string(),
                fmt_f64(r.null_mean),
                fmt_f64(r.null_std),
                fmt_f64(r.z_score),
                r.degenerate_null.to_string(),
            ]);
        }
    }
    let no_target = outcomes.iter().filter(|o| o.no_target).count();
    if no_target > 0 {
        warnings.push(format!("{no_target} section(s) have no '{target}' cell"));
    }
    let mut meta = ctx.meta(schema::ENRICHMENT);
    meta.warnings = warnings.clone();
    let path = ctx.out("enrichment.csv")?;
    io::write_csv(
        &path,
        &["section", "target", "partner", "observed", "null_mean", "null_std", "z", "degenerate_null"],
        &rows,
        &meta,
    )?;

    let profile = stability_from_outcomes(&target, &outcomes);
    let rows: Vec<Vec<String>> = profile
        .partners
        .iter()
        .map(|p| {
            vec![
                target.clone(),
                p.partner_type.clone(),
                p.z_by_section.iter().flatten().count().to_string(),
                fmt_opt(p.iqr),
                fmt_opt(p.frac_abs_z_above_2),
                p.spread_undefined.to_string(),
            ]
        })
        .collect();
    let mut meta = ctx.meta(schema::STABILITY_SUMMARY);
    meta.warnings = warnings.clone();
    let path = ctx.out("stability_summary.csv")?;
    io::write_csv(&path, &STABILITY_SUMMARY_HEADER, &rows, &meta)?;
    ctx.report.warnings.extend(warnings);
    Ok(())
}

fn reconstruction(ctx: &Ctx) -> Result<(Vec<SectionTable>, Reconstruction)> {
    let sections = group_into_sections(ctx.cells()?)?;
    let dz = match ctx.cfg().reconstruct.delta_z {
        Some(dz) => dz,
        None => infer_delta_z(&sections).ok_or_else(|| {
            Error::InvalidInput("cannot infer section spacing from fewer than two sections".into())
        })?,
    };
    let rec = reconstruct(&sections, dz, &ctx.cfg().matching)?;
    Ok((sections, rec))
}

fn run_reconstruct(ctx: &mut Ctx) -> Result<()> {
    let (_, rec) = reconstruction(ctx)?;
    let mut meta = ctx.meta(schema::POINTS);
    meta.info = Some(serde_json::json!({ "delta_z": rec.delta_z }));
    let low: Vec<String> = rec
        .stats
        .per_type
        .iter()
        .filter(|(_, s)| s.low_confidence)
        .map(|(t, s)| format!("type '{t}' has {} cells; size statistics pooled", s.n))
        .collect();
    meta.warnings = low.clone();
    ctx.report.warnings.extend(low);
    let points: Vec<io::PointRecord> = rec.points.iter().map(Into::into).collect();
    let path = ctx.out("points.csv")?;
    io::write_points(&path, &points, &meta)?;
    let json_meta = meta.with_schema(schema::JSON);
    let path = ctx.out("points.json")?;
    io::write_json(&path, &rec.points, &json_meta)?;
    let path = ctx.out("chains.json")?;
    io::write_json(&path, &rec.chains, &json_meta)?;
    let path = ctx.out("matches.json")?;
    io::write_json(&path, &rec.matches, &json_meta)?;
    let path = ctx.out("size_stats.json")?;
    io::write_json(&path, &rec.stats, &json_meta)
}

fn run_evaluate(ctx: &mut Ctx) -> Result<()> {
    let ec = ctx.cfg().evaluation.clone().ok_or_else(|| missing_block("evaluation"))?;
    let reference = match &ec.synthetic {
        Some(syn) => {
            let (reference, _) = crate::evaluation::synth_sphere_stack(syn)?;
            let path = ctx.out("reference_cells.csv")?;
            io::write_cells(&path, &reference.cells(), &ctx.meta(schema::CELLS))?;
            reference
        }
        None => {
            let base = ec.base_dz.ok_or_else(|| Error::Config("evaluation.base_dz is required".into()))?;
            ReferenceStack::from_cells(ctx.cells()?, base, None)?
        }
    };
    let mut rows = Vec::new();
    let mut hist = Vec::new();
    let mut warnings = Vec::new();
    for &dz in &ec.delta_z {
        let offsets = match &ec.offsets {
            Some(o) => o.clone(),
            None => all_offsets(reference.base_dz, dz)?,
        };
        let ev = evaluate(&reference, dz, &offsets, &ctx.cfg().matching)?;
        for r in ev.per_offset.iter().chain(std::iter::once(&ev.pooled)) {
            rows.push(io::CoverageRow::from(r));
            hist.push((dz, r.offset, histogram(&r.errors, ec.histogram_bin)?));
        }
        if ev.pooled.link_errors > 0 {
            warnings.push(format!(
                "delta_z {dz}: {} of {} chains mix true ids",
                ev.pooled.link_errors, ev.pooled.chains
            ));
        }
    }
    let mut meta = ctx.meta(schema::COVERAGE);
    meta.info = Some(serde_json::json!({
        "base_dz": reference.base_dz,
        "reference_ids": reference.centroids.len(),
        "unsectioned": reference.unsectioned,
    }));
    meta.warnings = warnings.clone();
    ctx.report.warnings.extend(warnings);
    let path = ctx.out("coverage.csv")?;
    io::write_coverage(&path, &rows, &meta)?;
    let path = ctx.out("localization_hist.csv")?;
    io::write_histogram(&path, &hist, &meta.with_schema(schema::HISTOGRAM))
}

fn structure_rows(structures: &[Structure3D]) -> Vec<Vec<String>> {
    structures
        .iter()
        .map(|s| {
            vec![
                s.structure_id.to_string(),
                s.len().to_string(),
                s.member_ids.join(";"),
                s.type_filter.join(";"),
                fmt_f64(s.origin[0]),
                fmt_f64(s.origin[1]),
                fmt_f64(s.origin[2]),
                fmt_f64(s.axis[0]),
                fmt_f64(s.axis[1]),
                fmt_f64(s.axis[2]),
                fmt_f64(s.extent[0]),
                fmt_f64(s.extent[1]),
                s.degenerate_axis.to_string(),
            ]
        })
        .collect()
}

fn run_structures(ctx: &mut Ctx) -> Result<()> {
    let sc = ctx.cfg().structures.clone().ok_or_else(|| missing_block("structures"))?;
    let (sections, rec) = reconstruction(ctx)?;
    let link_radius = match sc.link_radius {
        Some(r) => r,
        // an empty filter falls back to the pooled size statistics
        None => default_link_radius(&rec.stats, sc.type_filter.first().map_or("", String::as_str)),
    };
    let structures = build_structures(&rec.points, &sc.type_filter, link_radius)?;
    let mut warnings = Vec::new();
    let mut meta = ctx.meta(schema::STRUCTURES);
    meta.info = Some(serde_json::json!({ "link_radius": link_radius, "delta_z": rec.delta_z }));
    let path = ctx.out("structures.csv")?;
    io::write_csv(
        &path,
        &[
            "structure_id", "n_members", "member_ids", "type_filter", "origin_x", "origin_y", "origin_z", "axis_x",
            "axis_y", "axis_z", "extent_lo", "extent_hi", "degenerate_axis",
        ],
        &structure_rows(&structures),
        &meta,
    )?;

    let largest = structures.iter().max_by(|a, b| a.len().cmp(&b.len()).then(b.structure_id.cmp(&a.structure_id)));
    let mut rows = Vec::new();
    for q in &sc.queries {
        let target = if q.target == "structure" {
            match largest {
                Some(s) => DistanceTarget::Structure(s.clone()),
                None => {
                    warnings.push(format!("query {} -> structure skipped: no structures", q.source));
                    continue;
                }
            }
        } else {
            DistanceTarget::Type(q.target.clone())
        };
        let cmp = compare_distances(&rec.points, &sections, &q.source, &target)?;
        if cmp.n_flagged > 0 {
            warnings.push(format!("{}: {} source cells lack a same-section target", cmp.query, cmp.n_flagged));
        }
        for c in &cmp.cells {
            rows.push(vec![
                cmp.query.clone(),
                c.cell_id.clone(),
                c.section_index.to_string(),
                fmt_opt(c.d2d),
                fmt_opt(c.d3d),
            ]);
        }
    }
    let mut dmeta = ctx.meta(schema::DISTANCES);
    dmeta.warnings = warnings.clone();
    let path = ctx.out("distances.csv")?;
    io::write_csv(&path, &["query", "cell_id", "section", "d2d", "d3d"], &rows, &dmeta)?;

    let mut rows = Vec::new();
    for s in &structures {
        if s.len() < 3 || s.degenerate_axis {
            continue;
        }
        let p = along_structure_profile(s, &rec.points, sc.band_radius, sc.bins, sc.value)?;
        for b in &p.bins {
            for (t, v) in &b.values {
                rows.push(vec![
                    p.structure_id.to_string(),
                    b.bin.to_string(),
                    fmt_f64(b.arc_coord),
                    t.clone(),
                    fmt_f64(*v),
                ]);
            }
        }
    }
    let path = ctx.out("profiles.csv")?;
    io::write_csv(
        &path,
        &["structure_id", "bin", "arc_coord", "type", "value"],
        &rows,
        &ctx.meta(schema::PROFILES),
    )?;
    ctx.report.warnings.extend(warnings);
    Ok(())
}

fn median_stability_iqr(path: &Path) -> Result<Option<f64>> {
    let t = io::Table::read(path, schema::STABILITY_SUMMARY, &STABILITY_SUMMARY_HEADER)?;
    let mut v = Vec::new();
    for r in &t.rows {
        let s = t.str(r, "iqr")?;
        if !s.is_empty() {
            v.push(t.parse::<f64>(r, "iqr")?);
        }
    }
    if v.is_empty() {
        return Ok(None);
    }
    v.sort_by(f64::total_cmp);
    Ok(Some(percentile_sorted(&v, 0.5)))
}

fn run_advise(ctx: &mut Ctx) -> Result<()> {
    let mut runs = RunSummaries::default();
    let mut sources = Vec::new();
    if let Some(p) = ctx.find("recovery.csv") {
        runs.recovery = summarize(&io::read_recovery(&p)?);
        sources.push(p);
    }
    if let Some(p) = ctx.find("stability_summary.csv") {
        runs.enrichment_iqr = median_stability_iqr(&p)?;
        sources.push(p);
    }
    if let Some(p) = ctx.find("coverage.csv") {
        runs.coverage = io::read_coverage(&p)?;
        sources.push(p);
    }
    let report = advise(&runs, &ctx.cfg().advise);
    let mut meta = ctx.meta(schema::JSON);
    let names: Vec<String> = sources
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    meta.info = Some(serde_json::json!({ "sources": names }));
    if sources.is_empty() {
        let w = "no run summaries found; every goal reports insufficient evidence".to_string();
        meta.warnings.push(w.clone());
        ctx.report.warnings.push(w);
    }
    let path = ctx.out("advisory.json")?;
    io::write_json(&path, &report, &meta)
}
