use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Matrix3;
use serde::Serialize;

use thinfilm::config::OutputFormat;
use thinfilm::energy::{e_total, force_from_density, max_cell_distance};
use thinfilm::limits::{coefficient_identities, e_vk, e_vk_nu, z_gram_is_exact, ForceTerm};
use thinfilm::minimize::minimize_atomistic;
use thinfilm::recovery::{
    build_recovery, energy_barrier_check, limit_strain_moments, scaled_energy_gap, strain_moments, BarrierReport,
};
use thinfilm::report::{self, MomentRow, TraceRow};
use thinfilm::{
    perturbed_identity, Deformation, EnergyVariant, Error, FilmConfig, Lattice, Quadrature, RecoveryMap, Regime,
    ReportRow, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "thinfilm",
    version,
    about = "Atomistic thin films and their von Karman limits"
)]
struct Cli {
    /// Worker threads for the cell loops (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the cell and surface quadratic forms and export them.
    Forms(Common),
    /// Evaluate the scaled energy of a stored deformation.
    Energy {
        #[command(flatten)]
        common: Common,
        /// Deformation JSON written by `recover` or `minimize`.
        #[arg(long)]
        input: PathBuf,
        /// Add the body force from the `[force]` section.
        #[arg(long)]
        with_force: bool,
    },
    /// Evaluate the limit energy of the configured field.
    Limit {
        #[command(flatten)]
        common: Common,
        /// Fixed layer count; without it the infinitely-many-layer limit.
        #[arg(long)]
        nu: Option<usize>,
        /// Add the limit of the `[force]` term.
        #[arg(long)]
        with_force: bool,
    },
    /// Build the recovery deformation of one sweep level and store it.
    Recover {
        #[command(flatten)]
        common: Common,
        /// Zero-based sweep level, the finest by default.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Run the full sweep and write the convergence table.
    Converge(Common),
    /// Strain moments of the recovery against the limiting strain.
    Strain(Common),
    /// Descent run from a perturbed identity.
    Minimize(Common),
    /// Exact checks of the layer-sum coefficient identities.
    Identities {
        #[arg(long, default_value_t = 50)]
        nu_max: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Record wall times (makes the tables run dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<Run> {
        let mut cfg = RunConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(f) = self.format {
            cfg.output.format = match f {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
        }
        cfg.output.timing |= self.timing;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out)
            .map_err(Error::from)
            .with_context(|| format!("creating {}", out.display()))?;
        Ok(Run { cfg, out })
    }
}

impl Run {
    fn path(&self, stem: &str) -> PathBuf {
        let ext = match self.cfg.output.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        self.out.join(format!("{stem}.{ext}"))
    }

    fn write_table<T>(
        &self,
        stem: &str,
        rows: &[T],
        csv: fn(BufWriter<File>, &[T]) -> thinfilm::Result<()>,
        json: fn(BufWriter<File>, &[T]) -> thinfilm::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(stem);
        let file = create(&path)?;
        match self.cfg.output.format {
            OutputFormat::Csv => csv(file, rows),
            OutputFormat::Json => json(file, rows),
        }
        .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn levels(&self) -> Result<(Regime, Vec<FilmConfig>)> {
        let sweep = self.cfg.sweep()?;
        Ok((sweep.regime, sweep.levels()?))
    }

    fn domain(&self) -> (f64, f64) {
        self.cfg.sweep.as_ref().map_or((1.0, 1.0), |s| (s.lx, s.ly))
    }

    fn quadrature(&self, lx: f64, ly: f64) -> Result<Quadrature> {
        let per_unit = self.cfg.quadrature()?.per_unit as f64;
        Ok(Quadrature {
            lx,
            ly,
            m1: ((lx * per_unit).round() as usize).max(1),
            m2: ((ly * per_unit).round() as usize).max(1),
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    out.write_all(b"\n").map_err(Error::from)?;
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn matrix_rows<const R: usize>(m: &nalgebra::SMatrix<f64, R, R>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn forms(run: &Run) -> Result<()> {
    let forms = run.cfg.model.forms()?;
    #[derive(Serialize)]
    struct Export {
        method: thinfilm::quadforms::HessianMethod,
        min_eigenvalue_centered: f64,
        cell: Vec<Vec<f64>>,
        surface: Vec<Vec<f64>>,
    }
    let export = Export {
        method: forms.method,
        min_eigenvalue_centered: forms.cell.min_eigenvalue_on_centered(),
        cell: matrix_rows(&forms.cell.matrix),
        surface: matrix_rows(&forms.surf.matrix),
    };
    match run.cfg.output.format {
        OutputFormat::Json => write_json(&run.out.join("forms.json"), &export)?,
        OutputFormat::Csv => {
            for (name, rows) in [("forms_cell.csv", &export.cell), ("forms_surface.csv", &export.surface)] {
                let mut out = create(&run.out.join(name))?;
                for r in rows {
                    let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
                    writeln!(out, "{}", line.join(",")).map_err(Error::from)?;
                }
                out.flush().map_err(Error::from)?;
            }
        }
    }
    eprintln!("forms ({:?}) written to {}", forms.method, run.out.display());
    Ok(())
}

fn energy(run: &Run, input: &Path, with_force: bool) -> Result<()> {
    let file = File::open(input)
        .map_err(Error::from)
        .with_context(|| format!("opening {}", input.display()))?;
    let w: Deformation = serde_json::from_reader(BufReader::new(file))
        .map_err(Error::from)
        .with_context(|| format!("reading {}", input.display()))?;
    let lat = Lattice::new(w.config)?;
    let model = run.cfg.model.model()?;
    let force = if with_force {
        let spec = run
            .cfg
            .force
            .clone()
            .ok_or_else(|| Error::Config("missing [force] section".into()))?;
        Some(force_from_density(&lat, move |x| spec.density(x))?)
    } else {
        None
    };
    let total = e_total(&w, &lat, &model, force.as_ref(), EnergyVariant::Plain)?;
    let h = lat.thickness();
    print_json(&serde_json::json!({
        "eps": lat.epsilon(),
        "nu": w.config.nu,
        "h": h,
        "e_total": total,
        "e_scaled": total / h.powi(4),
        "max_dist": max_cell_distance(&w, &lat),
    }))
}

fn limit(run: &Run, nu: Option<usize>, with_force: bool) -> Result<()> {
    let field = run.cfg.field()?;
    let forms = run.cfg.model.forms()?;
    let (lx, ly) = run.domain();
    let quad = run.quadrature(lx, ly)?;
    let spec = run.cfg.force.clone();
    let density = move |x| spec.as_ref().map_or(nalgebra::Vector3::zeros(), |s| s.density(x));
    if with_force && run.cfg.force.is_none() {
        return Err(Error::Config("missing [force] section".into()).into());
    }
    let force = ForceTerm {
        density: &density,
        rotation: Matrix3::identity(),
    };
    let force = with_force.then_some(&force);
    let value = match nu {
        Some(n) => e_vk_nu(&field, n, &forms, &quad, force)?,
        None => e_vk(&field, &forms, &quad, force),
    };
    print_json(&serde_json::json!({
        "regime": if nu.is_some() { Regime::Ultrathin } else { Regime::Thin },
        "nu": nu,
        "lx": lx,
        "ly": ly,
        "with_force": with_force,
        "e_limit": value,
    }))
}

fn recover(run: &Run, level: Option<usize>) -> Result<()> {
    let (regime, levels) = run.levels()?;
    let n = level.unwrap_or(levels.len() - 1);
    let cfg = *levels
        .get(n)
        .ok_or_else(|| Error::Config(format!("level {n} out of range, the sweep has {} levels", levels.len())))?;
    let w = build_recovery(&run.cfg.field()?, &run.cfg.model.forms()?, cfg, regime)?;
    let path = run.out.join("recovery.json");
    write_json(&path, &w)?;
    eprintln!(
        "recovery at eps = {}, nu = {} written to {}",
        cfg.epsilon,
        cfg.nu,
        path.display()
    );
    Ok(())
}

fn converge(run: &Run) -> Result<()> {
    let (regime, levels) = run.levels()?;
    let field = run.cfg.field()?;
    let forms = run.cfg.model.forms()?;
    let model = run.cfg.model.model()?;
    let stats = scaled_energy_gap(&field, &forms, &model, &levels, regime, &run.cfg.sweep_options()?)?;
    let rows: Vec<ReportRow> = stats.iter().map(ReportRow::from).collect();
    let path = run.write_table(
        "convergence",
        &rows,
        report::write_convergence_csv,
        report::write_convergence_json,
    )?;
    for r in &rows {
        eprintln!("eps {:<10} nu {:<4} gap {:.6e}", r.eps, r.nu, r.gap_abs);
    }
    if let Some(delta) = run.cfg.sweep()?.delta {
        let barrier = match stats.iter().map(|s| s.max_dist).collect::<Option<Vec<_>>>() {
            Some(dist) => BarrierReport::from_levels(stats.iter().map(|s| s.h).collect(), dist, delta)?,
            None => energy_barrier_check(&field, &forms, &levels, regime, delta)?,
        };
        write_json(&run.out.join("barrier.json"), &barrier)?;
        match barrier.first_inside {
            Some(n) => eprintln!("inside S_delta/2 (delta {delta}) from level {n}"),
            None => eprintln!("the finest level is not inside S_delta/2 (delta {delta})"),
        }
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn strain(run: &Run) -> Result<()> {
    let (regime, levels) = run.levels()?;
    let field = run.cfg.field()?;
    let forms = run.cfg.model.forms()?;
    let (lx, ly) = run.domain();
    let quad = run.quadrature(lx, ly)?;
    let mut rows = vec![];
    for cfg in &levels {
        let lat = Lattice::new(*cfg)?;
        let map = RecoveryMap::new(&field, &forms, *cfg, regime, Matrix3::identity())?;
        let limit = limit_strain_moments(&field, &forms, regime, cfg.nu, &quad);
        let discrete = strain_moments(&map, &lat);
        eprintln!(
            "eps {:<10} nu {:<4} max moment gap {:.6e}",
            cfg.epsilon,
            cfg.nu,
            discrete.max_gap(&limit)?
        );
        rows.extend(MomentRow::from_sets(
            cfg.epsilon,
            cfg.nu,
            cfg.thickness(),
            &discrete,
            &limit,
        )?);
    }
    let path = run.write_table("moments", &rows, report::write_moments_csv, report::write_moments_json)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn minimize(run: &Run) -> Result<()> {
    let mc = run.cfg.minimize()?;
    let lat = Lattice::new(mc.film()?)?;
    let model = run.cfg.model.model()?;
    let force = if mc.use_force {
        let spec = run
            .cfg
            .force
            .clone()
            .ok_or_else(|| Error::Config("[minimize] use_force needs a [force] section".into()))?;
        Some(force_from_density(&lat, move |x| spec.density(x))?)
    } else {
        None
    };
    let w0 = perturbed_identity(&lat, mc.perturbation, run.cfg.seed);
    let result = minimize_atomistic(&w0, &lat, &model, force.as_ref(), &mc.options)?;
    let trace = run.write_table(
        "trace",
        &TraceRow::from_trace(&result.trace),
        report::write_trace_csv,
        report::write_trace_json,
    )?;
    write_json(&run.out.join("minimized.json"), &result.w)?;
    eprintln!(
        "{} iterations, energy {:.6e} -> {:.6e}, stop {:?}; wrote {}",
        result.iterations,
        result.trace[0],
        result.trace.last().copied().unwrap_or(f64::NAN),
        result.stop,
        trace.display()
    );
    result.into_checked()?;
    Ok(())
}

fn identities(nu_max: usize) -> Result<()> {
    if nu_max < 2 {
        return Err(Error::Parameter(format!("--nu-max must be at least 2, got {nu_max}")).into());
    }
    let mut failed = vec![];
    for nu in 2..=nu_max {
        let r = coefficient_identities(nu)?;
        println!(
            "nu {:>4}  layer sum {:>14}  closed form {:>14}  {}",
            nu,
            r.layer_sum,
            r.closed_form,
            if r.ok { "ok" } else { "FAIL" }
        );
        if !r.ok {
            failed.push(nu);
        }
    }
    let gram = z_gram_is_exact();
    println!("Z Z^T = 2 Id: {}", if gram { "ok" } else { "FAIL" });
    if !failed.is_empty() || !gram {
        return Err(Error::Numeric(format!("identities fail for nu in {failed:?}")).into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("--threads {n}: {e}")))?;
    }
    match cli.command {
        Command::Forms(c) => forms(&c.load()?),
        Command::Energy {
            common,
            input,
            with_force,
        } => energy(&common.load()?, &input, with_force),
        Command::Limit { common, nu, with_force } => limit(&common.load()?, nu, with_force),
        Command::Recover { common, level } => recover(&common.load()?, level),
        Command::Converge(c) => converge(&c.load()?),
        Command::Strain(c) => strain(&c.load()?),
        Command::Minimize(c) => minimize(&c.load()?),
        Command::Identities { nu_max } => identities(nu_max),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
