//! `perfhom` — command-line front end for the perforated-domain
//! homogenization harness.
//!
//! Exit codes: 0 on success, 1 on a numerical or domain error, 2 on a
//! configuration or usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use perfhom::capacity::{
    cap_ball, cap_relative_grid_with, cap_whole_space_with, GridCapacityOptions,
};
use perfhom::config::{parse_config, StudyConfig};
use perfhom::geometry::HoleShape;
use perfhom::homogenize::{
    assemble_corrector, corrector_error, heat_compare, lowest_mode, prepare_case, run_study_with,
    solve_homogenized, solve_perforated, write_study_outputs, RowStatus, StudyCase,
};
use perfhom::mpp::{
    good_bad_decompose, sample_process_with, thin, GeneratorSpec, MppRealization, SampleOptions,
};
use perfhom::numerics::{l2_norm, write_field, Aabb};
use perfhom::{Error, Result};

const WORKERS_ENV: &str = "PERFHOM_WORKERS";

#[derive(Parser)]
#[command(
    name = "perfhom",
    version,
    about = "Homogenization of randomly perforated domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity of a hole shape, relative to a ball of radius R or in all of space.
    Cap {
        /// `ball:R`, `box:A,B,C`, `union:X,Y,Z,R;...` or the JSON form.
        #[arg(long)]
        shape: String,
        /// Outer radius, or `inf` for the whole-space capacity.
        #[arg(long = "R", default_value = "inf")]
        outer: String,
        /// Grid nodes per axis for grid estimates.
        #[arg(long, default_value_t = 65)]
        n: usize,
        /// Richardson extrapolation between n and 2n-1 nodes.
        #[arg(long)]
        extrapolate: bool,
        /// Use the grid even where a closed form exists.
        #[arg(long)]
        grid: bool,
    },
    /// Sample a marked point process on a window; writes realization JSON.
    Sample {
        /// Generator as JSON text or a path to a JSON file.
        #[arg(long)]
        generator: String,
        /// `min:max` with each side a number or `x,y,z`.
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 65)]
        cap_resolution: usize,
        #[arg(long)]
        extrapolate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a realization into close (`T_δ`) and far (`T^δ`) points.
    Thin {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Directory for `<stem>.close.json` and `<stem>.far.json`
        /// (defaults to the input's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Good/bad decomposition of a realization at scale ε.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 10.0)]
        m: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perforated and homogenized solves for one study row.
    Solve(RowArgs),
    /// Solves plus the oscillating corrector for one study row.
    Corrector(RowArgs),
    /// Heat-semigroup comparison for one study row.
    Heat {
        #[command(flatten)]
        row: RowArgs,
        /// Override the capacity density (defaults to the estimate).
        #[arg(long)]
        c0: Option<f64>,
    },
    /// Full ε × seed study; writes study.csv and manifest.json.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (overridden by PERFHOM_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Args)]
struct RowArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed_index: usize,
    /// Directory for field dumps (with --dump-fields).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    allow_underresolved: bool,
    #[arg(long)]
    extrapolate: bool,
    #[arg(long)]
    dump_fields: bool,
    #[arg(long)]
    fail_fast: bool,
}

impl RunFlags {
    fn apply(&self, cfg: &mut StudyConfig) {
        cfg.run.allow_underresolved |= self.allow_underresolved;
        cfg.run.extrapolate |= self.extrapolate;
        cfg.output.dump_fields |= self.dump_fields;
        cfg.run.fail_fast |= self.fail_fast;
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, flags: &RunFlags) -> Result<StudyConfig> {
    let mut cfg = parse_config(&read_text(path)?)?;
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn load_realization(path: &Path) -> Result<MppRealization> {
    let real: MppRealization = serde_json::from_str(&read_text(path)?)?;
    real.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(real)
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_corner(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("window `{s}`: {e}")))
        })
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::Config(format!(
            "window corner `{s}`: expected 1 or 3 numbers"
        ))),
    }
}

fn parse_window(s: &str) -> Result<Aabb<f64>> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("window `{s}`: expected min:max")))?;
    Aabb::new(parse_corner(lo)?, parse_corner(hi)?)
        .map_err(|e| Error::Config(format!("window: {e}")))
}

fn parse_outer(s: &str) -> Result<Option<f64>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => Ok(None),
        t => {
            let r: f64 = t
                .parse()
                .map_err(|e| Error::Config(format!("--R `{s}`: {e}")))?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("--R must be positive, got {r}")));
            }
            Ok(Some(r))
        }
    }
}

fn cmd_cap(shape: &str, outer: &str, n: usize, extrapolate: bool, grid: bool) -> Result<()> {
    let shape = HoleShape::parse(shape)?;
    let outer = parse_outer(outer)?;
    let opts = GridCapacityOptions {
        extrapolate,
        ..Default::default()
    };
    let estimate = match (&shape, outer) {
        (HoleShape::Ball { radius }, r) if !grid => cap_ball(*radius, r, 3)?,
        (_, Some(r)) => cap_relative_grid_with(&shape, r, n, &opts)?,
        (_, None) => {
            // the schedule used for mark capacities
            let rho = shape.circumradius();
            cap_whole_space_with(&shape, &[2.0 * rho, 4.0 * rho], n, &opts)?
        }
    };
    emit(
        &json!({ "shape": shape, "R": outer, "estimate": estimate }),
        None,
    )
}

fn cmd_sample(
    generator: &str,
    window: &str,
    seed: u64,
    cap_resolution: usize,
    extrapolate: bool,
    out: Option<&Path>,
) -> Result<()> {
    let text = if generator.trim_start().starts_with('{') {
        generator.to_string()
    } else {
        read_text(Path::new(generator))?
    };
    let spec: GeneratorSpec = serde_json::from_str(&text)?;
    let window = parse_window(window)?;
    let real = sample_process_with(
        &spec,
        &window,
        seed,
        &SampleOptions {
            cap_resolution,
            extrapolate,
        },
    )?;
    emit(&real, out)
}

fn cmd_thin(input: &Path, delta: f64, out_dir: Option<&Path>) -> Result<()> {
    let real = load_realization(input)?;
    let (close, far) = thin(&real, delta)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(if dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        &dir
    })?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("realization");
    let close_path = dir.join(format!("{stem}.close.json"));
    let far_path = dir.join(format!("{stem}.far.json"));
    emit(&close, Some(&close_path))?;
    emit(&far, Some(&far_path))?;
    emit(
        &json!({ "delta": delta, "close": close_path, "far": far_path, "n_close": close.len(), "n_far": far.len() }),
        None,
    )
}

fn cmd_decompose(input: &Path, epsilon: f64, alpha: f64, m: f64, out: Option<&Path>) -> Result<()> {
    let real = load_realization(input)?;
    let dec = good_bad_decompose(&real, epsilon, alpha, m)?;
    let invariants = dec.verify(&real);
    emit(
        &json!({ "decomposition": dec, "invariants": invariants, "all_invariants_hold": invariants.all() }),
        out,
    )
}

fn dump(
    cfg: &StudyConfig,
    row: &RowArgs,
    fields: &[(&str, &perfhom::numerics::ScalarField<f64>)],
) -> Result<Option<PathBuf>> {
    if !cfg.output.dump_fields {
        return Ok(None);
    }
    let dir = row
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
        .join("fields");
    fs::create_dir_all(&dir)?;
    for (name, f) in fields {
        write_field(*f, &dir.join(name))?;
    }
    Ok(Some(dir))
}

fn row_case(row: &RowArgs) -> Result<(StudyConfig, StudyCase)> {
    let cfg = load_config(&row.config, &row.flags)?;
    if !(row.epsilon > 0.0 && row.epsilon <= 1.0) {
        return Err(Error::Config(format!(
            "--epsilon must lie in ]0, 1], got {}",
            row.epsilon
        )));
    }
    let case = prepare_case(&cfg, row.epsilon, row.seed_index)?;
    Ok((cfg, case))
}

fn cmd_solve(row: &RowArgs, with_corrector: bool) -> Result<()> {
    let (cfg, case) = row_case(row)?;
    let opts = cfg.solve_options();
    let u_eps = solve_perforated(&case.perforation.mask, &case.source, &opts)?;
    let c0 = case.c0_est();
    let u_hom = solve_homogenized(&case.source, c0, case.modulation.as_ref(), &opts)?;
    let mut report = json!({
        "epsilon": case.epsilon,
        "seed": case.realization.seed,
        "grid_n": cfg.domain.grid_n,
        "c0_est": c0,
        "holes": case.perforation.holes.len(),
        "bias_warning": case.perforation.bias_warning,
        "l2_err": l2_norm(&u_eps.sub(&u_hom)?),
    });
    let mut fields = vec![("u_eps", &u_eps), ("u_hom", &u_hom)];
    let corrector;
    if with_corrector {
        corrector = assemble_corrector(
            &case.spec(),
            &case.decomposition,
            &case.perforation.mask,
            &opts,
        )?;
        let err = corrector_error(&u_eps, &u_hom, &corrector)?;
        report["h1_err_plain"] = json!(err.h1_plain);
        report["h1_err_corr"] = json!(err.h1_corr);
        report["corr_ratio"] = json!(err.ratio);
        report["good_holes"] = json!(case.decomposition.i_g.len());
        report["bad_holes"] = json!(case.decomposition.i_b.len());
        fields.push(("corrector", &corrector));
    }
    if let Some(dir) = dump(&cfg, row, &fields)? {
        report["fields"] = json!(dir);
    }
    emit(&report, None)
}

fn cmd_heat(row: &RowArgs, c0: Option<f64>) -> Result<()> {
    let (cfg, case) = row_case(row)?;
    let c0 = c0.unwrap_or_else(|| case.c0_est());
    let dt = cfg.heat_dt();
    let err = heat_compare(
        &case.perforation.mask,
        c0,
        &lowest_mode(&case.grid),
        cfg.heat.t,
        dt,
        &cfg.solve_options(),
    )?;
    emit(
        &json!({ "epsilon": case.epsilon, "seed": case.realization.seed, "c0": c0, "t": cfg.heat.t, "dt": dt, "heat_err": err }),
        None,
    )
}

fn workers_override(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| {
                Error::Config(format!(
                    "{WORKERS_ENV}: expected a positive integer, got `{v}`"
                ))
            }),
        _ => Ok(flag),
    }
}

fn cmd_study(
    config: &Path,
    workers: Option<usize>,
    out: Option<&Path>,
    flags: &RunFlags,
) -> Result<()> {
    let mut cfg = load_config(config, flags)?;
    if let Some(w) = workers_override(workers)? {
        cfg.run.workers = w;
    }
    if let Some(o) = out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output.dir);
    let fields = cfg.output.dump_fields.then(|| dir.join("fields"));
    let report = run_study_with(&cfg, fields.as_deref())?;
    let (csv, manifest) = write_study_outputs(&report, &dir)?;
    let failed = report
        .rows
        .iter()
        .filter(|r| r.status != RowStatus::Ok)
        .count();
    for r in report.rows.iter() {
        if let RowStatus::Failed(msg) = &r.status {
            eprintln!("row epsilon={} seed={} failed: {msg}", r.epsilon, r.seed);
        }
    }
    emit(
        &json!({ "csv": csv, "manifest": manifest, "rows": report.rows.len(), "failed": failed }),
        None,
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cap {
            shape,
            outer,
            n,
            extrapolate,
            grid,
        } => cmd_cap(&shape, &outer, n, extrapolate, grid),
        Command::Sample {
            generator,
            window,
            seed,
            cap_resolution,
            extrapolate,
            out,
        } => cmd_sample(
            &generator,
            &window,
            seed,
            cap_resolution,
            extrapolate,
            out.as_deref(),
        ),
        Command::Thin {
            input,
            delta,
            out_dir,
        } => cmd_thin(&input, delta, out_dir.as_deref()),
        Command::Decompose {
            input,
            epsilon,
            alpha,
            m,
            out,
        } => cmd_decompose(&input, epsilon, alpha, m, out.as_deref()),
        Command::Solve(row) => cmd_solve(&row, false),
        Command::Corrector(row) => cmd_solve(&row, true),
        Command::Heat { row, c0 } => cmd_heat(&row, c0),
        Command::Study {
            config,
            workers,
            out,
            flags,
        } => cmd_study(&config, workers, out.as_deref(), &flags),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("perfhom: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
