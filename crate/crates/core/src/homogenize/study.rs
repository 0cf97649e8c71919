use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    assemble_corrector, build_perforation, corrector_error, heat_compare, lowest_mode,
    solve_homogenized, solve_perforated, source_field, Modulation, Perforation, PerforationSpec,
};
use crate::config::{render_config, StudyConfig};
use crate::error::{Error, Result};
use crate::mpp::{
    estimate_c0, good_bad_decompose_modulated, mix64, sample_process_with, GoodBadDecomposition,
    MppRealization, SampleOptions,
};
use crate::numerics::{l2_norm, write_field, Aabb, Grid, ScalarField};

/// Bit-exact CSV header of the study table.
pub const CSV_HEADER: &str =
    "epsilon,seed,grid_n,c0_est,l2_err,h1_err_plain,h1_err_corr,corr_ratio,heat_err,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// One `(ε, seed)` run. Quantities that are undefined or were not computed
/// are `None` (written as `nan` in the CSV, `null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub epsilon: f64,
    pub seed_index: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub c0_est: Option<f64>,
    pub l2_err: Option<f64>,
    pub h1_err_plain: Option<f64>,
    pub h1_err_corr: Option<f64>,
    pub corr_ratio: Option<f64>,
    pub heat_err: Option<f64>,
    pub wall_ms: u64,
    pub bias_warning: bool,
    pub status: RowStatus,
}

/// Means over the successful rows of one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyAggregate {
    pub epsilon: f64,
    pub rows_ok: usize,
    pub rows_failed: usize,
    pub mean_c0_est: Option<f64>,
    pub mean_l2_err: Option<f64>,
    pub mean_h1_err_plain: Option<f64>,
    pub mean_h1_err_corr: Option<f64>,
    pub mean_corr_ratio: Option<f64>,
    pub mean_heat_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub version: String,
    /// SHA-256 of the canonical rendering of the configuration.
    pub config_sha256: String,
    /// `C₀ V(centre of D)^{d-2}` with `C₀` the mean estimate at the smallest
    /// ε; enters the manufactured source.
    pub c0_nominal: f64,
    /// Ordered by (ε index, seed index).
    pub rows: Vec<StudyRow>,
    pub aggregates: Vec<StudyAggregate>,
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(x) if x.is_finite() => write!(out, "{x}").unwrap(),
        _ => out.push_str("nan"),
    }
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{},", r.epsilon, r.seed, r.grid_n).unwrap();
            for v in [
                r.c0_est,
                r.l2_err,
                r.h1_err_plain,
                r.h1_err_corr,
                r.corr_ratio,
                r.heat_err,
            ] {
                fmt_opt(&mut out, v);
                out.push(',');
            }
            writeln!(out, "{}", r.wall_ms).unwrap();
        }
        out
    }

    pub fn aggregate(&self, epsilon: f64) -> Option<&StudyAggregate> {
        self.aggregates.iter().find(|a| a.epsilon == epsilon)
    }
}

/// Smallest box containing every `ε⁻¹ W`; each seed is sampled once there so
/// that all scales of a seed see the same ground process.
fn hull_window(cfg: &StudyConfig) -> Aabb<f64> {
    let w = cfg.window_box();
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &e in &cfg.study.epsilons {
        let s = w.scaled(1.0 / e);
        for a in 0..3 {
            min[a] = min[a].min(s.min[a]);
            max[a] = max[a].max(s.max[a]);
        }
    }
    Aabb { min, max }
}

/// One sampled realization per seed, on the hull of the scaled windows.
pub fn sample_study_realizations(cfg: &StudyConfig) -> Result<Vec<MppRealization>> {
    let hull = hull_window(cfg);
    let opts = SampleOptions {
        cap_resolution: cfg.run.cap_resolution,
        extrapolate: cfg.run.extrapolate,
    };
    (0..cfg.study.seeds)
        .map(|i| {
            sample_process_with(
                &cfg.generator,
                &hull,
                mix64(cfg.study.base_seed, i as u64),
                &opts,
            )
        })
        .collect()
}

/// The realization seen at scale `ε`: the seed's ground process observed
/// through `ε⁻¹ W`.
pub fn realization_at(ground: &MppRealization, cfg: &StudyConfig, epsilon: f64) -> MppRealization {
    ground.with_window(cfg.window_box().scaled(1.0 / epsilon))
}

fn config_hash(cfg: &StudyConfig) -> Result<String> {
    let digest = Sha256::digest(render_config(cfg)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything one `(ε, seed)` row needs before the solves: the realization
/// seen at scale ε, its decomposition and the perforated mask.
#[derive(Debug, Clone)]
pub struct StudyCase {
    pub epsilon: f64,
    pub realization: MppRealization,
    pub grid: Grid<f64>,
    pub decomposition: GoodBadDecomposition,
    pub perforation: Perforation,
    pub source: ScalarField<f64>,
    pub modulation: Option<Modulation>,
    resolve_factor: f64,
    allow_underresolved: bool,
}

impl StudyCase {
    pub fn spec(&self) -> PerforationSpec<'_> {
        PerforationSpec {
            epsilon: self.epsilon,
            domain: self.grid.bbox(),
            realization: &self.realization,
            modulation: self.modulation.clone(),
            resolve_factor: self.resolve_factor,
            allow_underresolved: self.allow_underresolved,
        }
    }

    /// The capacity density the homogenized problem is given.
    pub fn c0_est(&self) -> f64 {
        estimate_c0(&self.realization)
    }
}

/// Mean `estimate_c0` at the smallest ε over all seeds, times `V^{d-2}` at
/// the centre of `D`.
fn nominal_c0(cfg: &StudyConfig, grounds: &[MppRealization]) -> f64 {
    let eps_min = cfg
        .study
        .epsilons
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mean_c0 = grounds
        .iter()
        .map(|g| estimate_c0(&realization_at(g, cfg, eps_min)))
        .sum::<f64>()
        / grounds.len() as f64;
    let domain = cfg.domain_box();
    let centre = [0, 1, 2].map(|a| 0.5 * (domain.min[a] + domain.max[a]));
    let v = cfg
        .study
        .modulation
        .as_ref()
        .map_or(1.0, |m| m.eval(centre));
    mean_c0 * v.powi(crate::DIM as i32 - 2)
}

fn build_case(
    cfg: &StudyConfig,
    ground: &MppRealization,
    epsilon: f64,
    c0_nominal: f64,
) -> Result<StudyCase> {
    let domain = cfg.domain_box();
    let grid = Grid::new(domain, cfg.domain.grid_n)?;
    let realization = realization_at(ground, cfg, epsilon);
    let modulation = cfg.study.modulation.clone();
    let decomposition = match &modulation {
        Some(m) => good_bad_decompose_modulated(
            &realization,
            epsilon,
            cfg.study.alpha,
            cfg.study.m,
            &|x| m.eval(x),
        )?,
        None => good_bad_decompose_modulated(
            &realization,
            epsilon,
            cfg.study.alpha,
            cfg.study.m,
            &|_| 1.0,
        )?,
    };
    let perforation = build_perforation(
        &PerforationSpec {
            epsilon,
            domain,
            realization: &realization,
            modulation: modulation.clone(),
            resolve_factor: cfg.study.resolve_factor,
            allow_underresolved: cfg.run.allow_underresolved,
        },
        &grid,
    )?;
    Ok(StudyCase {
        epsilon,
        source: source_field(cfg.study.source, &grid, c0_nominal),
        realization,
        grid,
        decomposition,
        perforation,
        modulation,
        resolve_factor: cfg.study.resolve_factor,
        allow_underresolved: cfg.run.allow_underresolved,
    })
}

/// Prepares row `(epsilon, seed_index)` of the study exactly as
/// [`run_study`] does.
pub fn prepare_case(cfg: &StudyConfig, epsilon: f64, seed_index: usize) -> Result<StudyCase> {
    cfg.validate()?;
    if seed_index >= cfg.study.seeds {
        return Err(Error::config(format!(
            "seed index {seed_index} exceeds study.seeds = {}",
            cfg.study.seeds
        )));
    }
    let grounds = sample_study_realizations(cfg)?;
    build_case(
        cfg,
        &grounds[seed_index],
        epsilon,
        nominal_c0(cfg, &grounds),
    )
}

struct RowOutcome {
    c0_est: f64,
    l2_err: f64,
    h1_err_plain: f64,
    h1_err_corr: f64,
    corr_ratio: Option<f64>,
    heat_err: Option<f64>,
    bias_warning: bool,
}

fn run_row(cfg: &StudyConfig, case: &StudyCase, dump: Option<&Path>) -> Result<RowOutcome> {
    let opts = cfg.solve_options();
    let mask = &case.perforation.mask;
    let u_eps = solve_perforated(mask, &case.source, &opts)?;
    // the homogenized problem sees the perforation only through this number
    let c0_est = case.c0_est();
    let u_hom = solve_homogenized(&case.source, c0_est, case.modulation.as_ref(), &opts)?;
    let corrector = assemble_corrector(&case.spec(), &case.decomposition, mask, &opts)?;
    let l2_err = l2_norm(&u_eps.sub(&u_hom)?);
    let ce = corrector_error(&u_eps, &u_hom, &corrector)?;
    let heat_err = if cfg.heat.enabled {
        Some(heat_compare(
            mask,
            c0_est,
            &lowest_mode(&case.grid),
            cfg.heat.t,
            cfg.heat_dt(),
            &opts,
        )?)
    } else {
        None
    };
    if let Some(dir) = dump {
        fs::create_dir_all(dir)?;
        for (name, field) in [
            ("u_eps", &u_eps),
            ("u_hom", &u_hom),
            ("corrector", &corrector),
        ] {
            write_field(field, &dir.join(name))?;
        }
    }
    Ok(RowOutcome {
        c0_est,
        l2_err,
        h1_err_plain: ce.h1_plain,
        h1_err_corr: ce.h1_corr,
        corr_ratio: ce.ratio,
        heat_err,
        bias_warning: case.perforation.bias_warning,
    })
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregates(cfg: &StudyConfig, rows: &[StudyRow]) -> Vec<StudyAggregate> {
    cfg.study
        .epsilons
        .iter()
        .map(|&epsilon| {
            let mine: Vec<&StudyRow> = rows.iter().filter(|r| r.epsilon == epsilon).collect();
            let ok: Vec<&&StudyRow> = mine.iter().filter(|r| r.status == RowStatus::Ok).collect();
            StudyAggregate {
                epsilon,
                rows_ok: ok.len(),
                rows_failed: mine.len() - ok.len(),
                mean_c0_est: mean(ok.iter().map(|r| r.c0_est)),
                mean_l2_err: mean(ok.iter().map(|r| r.l2_err)),
                mean_h1_err_plain: mean(ok.iter().map(|r| r.h1_err_plain)),
                mean_h1_err_corr: mean(ok.iter().map(|r| r.h1_err_corr)),
                mean_corr_ratio: mean(ok.iter().map(|r| r.corr_ratio)),
                mean_heat_err: mean(ok.iter().map(|r| r.heat_err)),
            }
        })
        .collect()
}

/// Runs every `(ε, seed)` row without writing fields.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    run_study_with(cfg, None)
}

/// Runs the study; when `dump_dir` is given, `u_eps`, `u_hom` and the
/// corrector of row `(i, j)` are written to `dump_dir/eps{i}_seed{j}/`.
///
/// Rows run concurrently on `cfg.run.workers` threads; each row is
/// deterministic, so the report does not depend on the worker count. Row
/// failures are recorded unless `cfg.run.fail_fast` is set.
pub fn run_study_with(cfg: &StudyConfig, dump_dir: Option<&Path>) -> Result<StudyReport> {
    cfg.validate()?;
    let grounds = sample_study_realizations(cfg)?;
    let c0_nominal = nominal_c0(cfg, &grounds);

    let jobs: Vec<(usize, usize)> = (0..cfg.study.epsilons.len())
        .flat_map(|e| (0..cfg.study.seeds).map(move |s| (e, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::config(format!("run.workers: {e}")))?;
    let timing = cfg.output.timing;
    let results: Vec<(usize, usize, Result<RowOutcome>, u64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e, s)| {
                let start = Instant::now();
                let dump: Option<PathBuf> = dump_dir.map(|d| d.join(format!("eps{e}_seed{s}")));
                let out = build_case(cfg, &grounds[s], cfg.study.epsilons[e], c0_nominal)
                    .and_then(|case| run_row(cfg, &case, dump.as_deref()));
                let ms = if timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                };
                (e, s, out, ms)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    for (e, s, out, wall_ms) in results {
        let base = StudyRow {
            epsilon: cfg.study.epsilons[e],
            seed_index: s,
            seed: grounds[s].seed,
            grid_n: cfg.domain.grid_n,
            c0_est: None,
            l2_err: None,
            h1_err_plain: None,
            h1_err_corr: None,
            corr_ratio: None,
            heat_err: None,
            wall_ms,
            bias_warning: false,
            status: RowStatus::Ok,
        };
        rows.push(match out {
            Ok(o) => StudyRow {
                c0_est: Some(o.c0_est),
                l2_err: Some(o.l2_err),
                h1_err_plain: Some(o.h1_err_plain),
                h1_err_corr: Some(o.h1_err_corr),
                corr_ratio: o.corr_ratio,
                heat_err: o.heat_err,
                bias_warning: o.bias_warning,
                ..base
            },
            Err(err) if cfg.run.fail_fast => return Err(err),
            Err(err) => StudyRow {
                status: RowStatus::Failed(err.to_string()),
                ..base
            },
        });
    }
    let aggregates = aggregates(cfg, &rows);
    Ok(StudyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_hash(cfg)?,
        c0_nominal,
        rows,
        aggregates,
    })
}

/// Writes `study.csv` and `manifest.json` into `dir`; returns their paths.
pub fn write_study_outputs(report: &StudyReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("study.csv");
    let manifest = dir.join("manifest.json");
    fs::write(&csv, report.to_csv())?;
    fs::write(&manifest, serde_json::to_string_pretty(report)? + "\n")?;
    Ok((csv, manifest))
}
