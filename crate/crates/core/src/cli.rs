//! Command-line surface: `encode`, `solve`, `render`, `decode`, `angles`.
//!
//! Every command resolves a [`RunManifest`] from defaults, then `--manifest`,
//! then individual flags, and writes the effective manifest next to its
//! outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::designer::{
    aggregate, solve_all_combos, stamp_finder_patterns, ComboRequest, ViewTargetStack,
    FINDER_CORNERS,
};
use crate::formats::{
    combo_table_csv, read_bit_pgm, read_gray_pgm, read_layer_pgm, read_stack, trace_csv,
    write_bytes, write_cache, write_gray_pgm, write_layer_pgm, write_stack,
};
use crate::imaging::{decode_bits, render_view, rms_error, Levels};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::marker::{BinaryLayer, CellSpec, LayerRole, ViewSpec};
use crate::optics::{annotate_view_angles, GlassSpec};
use crate::patterns::PatternSpec;

pub const JOBS_ENV: &str = "QRTAG_JOBS";
pub const STACK_FILE: &str = "stack.json";
pub const FRONT_FILE: &str = "front.pgm";
pub const REAR_FILE: &str = "rear.pgm";

#[derive(Debug, Parser)]
#[command(
    name = "qrtag",
    version,
    about = "Design and simulate two-layer parallax markers"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run manifest (TOML); flags override its fields.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// High-resolution pixels per code pixel side.
    #[arg(long, global = true)]
    pub scale: Option<usize>,
    /// Views per axis (odd).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Code levels as LOW,HIGH.
    #[arg(long, global = true, value_parser = parse_levels)]
    pub levels: Option<Levels>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Worker threads for combo solving; does not affect results.
    #[arg(long, global = true, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a target stack from per-view bit images or a generator.
    Encode {
        /// One bit image (PGM, values 0 or maxval) per view, row-major order.
        #[arg(long, num_args = 1..)]
        images: Vec<PathBuf>,
        /// Generator such as "random 21x21" or "checkerboard 9x9".
        #[arg(long, conflicts_with = "images")]
        generate: Option<String>,
        /// Stamp finder patterns into three corners of every view.
        #[arg(long)]
        finders: bool,
    },
    /// Solve all combos of a stack and aggregate the layers.
    Solve {
        #[arg(long)]
        stack: Option<PathBuf>,
        /// Solve every combo of the grid, not only those in the stack.
        #[arg(long)]
        full: bool,
        /// Also write the view angle table (needs glass.pixel_pitch_um).
        #[arg(long)]
        angles: bool,
        /// Write per-combo WNMF objective traces.
        #[arg(long)]
        traces: bool,
    },
    /// Render views of a solved design.
    Render {
        /// Directory holding front.pgm and rear.pgm.
        #[arg(long)]
        layers: PathBuf,
        /// Comma-separated 1-based view indices, or "all".
        #[arg(long, default_value = "all")]
        views: String,
    },
    /// Binarize a rendered view and compare it with the intended code.
    Decode {
        #[arg(long)]
        image: PathBuf,
        /// Intended code: a stack file (with --view) or a bit image.
        #[arg(long)]
        code: Option<PathBuf>,
        /// 1-based view index into the stack; defaults to the center view.
        #[arg(long)]
        view: Option<usize>,
    },
    /// Print the per-view offset and angle table.
    Angles,
}

fn parse_levels(s: &str) -> Result<Levels, String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LOW,HIGH, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Levels::new(lo, hi).map_err(|e| e.to_string())
}

/// Result of a command. `bounds_ok` is false when a manifest bound was
/// violated; the process then exits nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub bounds_ok: bool,
    pub message: String,
}

impl Outcome {
    fn ok(message: String) -> Self {
        Self {
            bounds_ok: true,
            message,
        }
    }
}

impl CommonArgs {
    pub fn resolve_manifest(&self, fallback: Option<&Path>) -> anyhow::Result<RunManifest> {
        let path = self.manifest.as_deref().or(fallback.filter(|p| p.exists()));
        let mut m = match path {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        if let Some(s) = self.scale {
            m.cell.scale = s;
        }
        if let Some(k) = self.grid {
            if k != m.view.grid_k {
                // the margin default follows the grid
                m.cell.margin = None;
            }
            m.view.grid_k = k;
        }
        if let Some(l) = self.levels {
            m.levels = l;
        }
        if let Some(s) = self.seed {
            m.solver.wnmf.seed = s;
        }
        if let Some(r) = self.restarts {
            m.solver.restarts = r;
        }
        if let Some(o) = &self.out {
            m.paths.out = Some(o.display().to_string());
        }
        m.tool_version = env!("CARGO_PKG_VERSION").into();
        m.validate()?;
        Ok(m)
    }

    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

fn out_dir(m: &RunManifest) -> anyhow::Result<PathBuf> {
    m.paths
        .out
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| anyhow!("no output directory: pass --out or set paths.out"))
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Encode {
            images,
            generate,
            finders,
        } => cmd_encode(&cli.common, images, generate.as_deref(), *finders),
        Command::Solve {
            stack,
            full,
            angles,
            traces,
        } => cmd_solve(&cli.common, stack.as_deref(), *full, *angles, *traces),
        Command::Render { layers, views } => cmd_render(&cli.common, layers, views),
        Command::Decode { image, code, view } => {
            cmd_decode(&cli.common, image, code.as_deref(), *view)
        }
        Command::Angles => cmd_angles(&cli.common),
    }
}

pub fn cmd_encode(
    args: &CommonArgs,
    images: &[PathBuf],
    generate: Option<&str>,
    finders: bool,
) -> anyhow::Result<Outcome> {
    let mut m = args.resolve_manifest(None)?;
    let view = m.view_spec()?;
    let bits = match (images.is_empty(), generate) {
        (false, None) => {
            if images.len() != view.count() {
                bail!("{} images given for {} views", images.len(), view.count());
            }
            let bits = images
                .iter()
                .map(|p| read_bit_pgm(p))
                .collect::<crate::Result<Vec<_>>>()?;
            let dim = bits[0].dim();
            let offending: Vec<String> = images
                .iter()
                .zip(&bits)
                .filter(|(_, b)| b.dim() != dim)
                .map(|(p, b)| format!("{} ({}x{})", p.display(), b.nrows(), b.ncols()))
                .collect();
            if !offending.is_empty() {
                bail!(
                    "images differ in size from {} ({}x{}): {}",
                    images[0].display(),
                    dim.0,
                    dim.1,
                    offending.join(", ")
                );
            }
            bits
        }
        (true, Some(g)) => g
            .parse::<PatternSpec>()?
            .generate(view.count(), m.solver.wnmf.seed),
        _ => bail!("pass either --images or --generate"),
    };
    let mut stack = ViewTargetStack::from_bits(&bits, view, m.levels)?;
    if finders {
        stack = stamp_finder_patterns(&stack, &FINDER_CORNERS)?;
    }
    let out = out_dir(&m)?;
    let stack_path = out.join(STACK_FILE);
    write_stack(&stack_path, &stack)?;
    m.paths.stack = Some(stack_path.display().to_string());
    m.save(&out.join(MANIFEST_FILE))?;
    let (r, c) = stack.dim();
    Ok(Outcome::ok(format!(
        "wrote {} ({} views, {r}x{c})",
        stack_path.display(),
        stack.codes.len()
    )))
}

/// Per-view decode statistics of a design against its stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMetrics {
    pub index: usize,
    pub hamming: usize,
    pub ber: f64,
    pub rms: f64,
}

pub fn view_metrics(
    stack: &ViewTargetStack,
    front: &BinaryLayer,
    rear: &BinaryLayer,
    cell: &CellSpec,
) -> crate::Result<Vec<ViewMetrics>> {
    let levels = stack.levels();
    (1..=stack.view.count())
        .map(|idx| {
            let rendered = render_view(front, rear, &stack.view, idx, cell)?;
            let code = &stack.codes[idx - 1];
            let decoded = decode_bits(&rendered, &levels);
            let hamming = decoded
                .iter()
                .zip(code.bits().iter())
                .filter(|(a, b)| a != b)
                .count();
            Ok(ViewMetrics {
                index: idx,
                hamming,
                ber: hamming as f64 / decoded.len() as f64,
                rms: rms_error(&code.values, &rendered)?,
            })
        })
        .collect()
}

fn angle_table(glass: &GlassSpec, view: &ViewSpec) -> anyhow::Result<String> {
    let pitch = glass
        .pixel_pitch_um
        .ok_or_else(|| anyhow!("glass.pixel_pitch_um is not set; angles cannot be computed"))?;
    let annotated = annotate_view_angles(glass, view)?;
    let angles = annotated.angles.expect("annotated");
    let mut out = String::from("view,u,v,x_um,y_um,theta_u_deg,theta_v_deg\n");
    for (i, (&(u, v), &(tu, tv))) in view.offsets.iter().zip(&angles).enumerate() {
        let _ = writeln!(
            out,
            "{},{u},{v},{:.4},{:.4},{tu:.6},{tv:.6}",
            i + 1,
            u as f64 * pitch,
            v as f64 * pitch
        );
    }
    Ok(out)
}

pub fn cmd_solve(
    args: &CommonArgs,
    stack: Option<&Path>,
    full: bool,
    angles: bool,
    traces: bool,
) -> anyhow::Result<Outcome> {
    let mut m = args.resolve_manifest(None)?;
    if angles {
        m.glass.require_pitch()?;
    }
    if full {
        m.full_enumeration = true;
    }
    if let Some(s) = stack {
        m.paths.stack = Some(s.display().to_string());
    }
    let stack_path = m
        .paths
        .stack
        .clone()
        .ok_or_else(|| anyhow!("no stack: pass --stack or set paths.stack"))?;
    let stack = read_stack(Path::new(&stack_path))?;
    let view = m.view_spec()?;
    let cell = m.cell_spec()?;
    if stack.view.grid_k != view.grid_k || stack.view.shift_step != view.shift_step {
        bail!(
            "stack was encoded for a {}x{} grid, manifest asks for {}x{}",
            stack.view.grid_k,
            stack.view.grid_k,
            view.grid_k,
            view.grid_k
        );
    }
    if stack.levels() != m.levels {
        bail!("stack levels differ from manifest levels");
    }
    let request = if m.full_enumeration {
        ComboRequest::All
    } else {
        ComboRequest::for_stack(&stack)
    };
    let (cache, report) =
        solve_all_combos(&cell, &view, m.levels, &m.solver, &request, args.jobs())?;

    let out = out_dir(&m)?;
    let mut summary = String::new();
    let mut bounds_ok = true;
    for (combo, err) in &report.failures {
        bounds_ok = false;
        let _ = writeln!(summary, "combo {combo} failed: {err}");
    }
    let used = stack.distinct_combos();
    if used.iter().any(|c| cache.get(*c).is_none()) {
        write_bytes(&out.join("summary.txt"), summary.as_bytes())?;
        bail!("some combos of the stack could not be solved:\n{summary}");
    }
    let (front, rear) = aggregate(&stack, &cache, &cell)?;
    let metrics = view_metrics(&stack, &front, &rear, &cell)?;

    let worst_rms = used
        .iter()
        .map(|c| cache.get(*c).expect("checked").rms)
        .fold(0.0, f64::max);
    let _ = writeln!(
        summary,
        "combos solved: {} (stack uses {}), worst stack combo rms {worst_rms:.6}",
        cache.len(),
        used.len()
    );
    let _ = writeln!(summary, "view,hamming,ber,rms");
    for vm in &metrics {
        let _ = writeln!(
            summary,
            "{},{},{:.6},{:.6}",
            vm.index, vm.hamming, vm.ber, vm.rms
        );
    }
    if let Some(b) = m.bounds.max_combo_rms {
        if worst_rms > b {
            bounds_ok = false;
            let _ = writeln!(summary, "VIOLATION: combo rms {worst_rms:.6} > {b}");
        }
    }
    if let Some(b) = m.bounds.max_view_ber {
        for vm in metrics.iter().filter(|vm| vm.ber > b) {
            bounds_ok = false;
            let _ = writeln!(
                summary,
                "VIOLATION: view {} ber {:.6} > {b}",
                vm.index, vm.ber
            );
        }
    }

    write_layer_pgm(&out.join(FRONT_FILE), &front)?;
    write_layer_pgm(&out.join(REAR_FILE), &rear)?;
    write_cache(&out.join("cache"), &cache)?;
    write_bytes(&out.join("report.csv"), combo_table_csv(&cache).as_bytes())?;
    write_bytes(&out.join("summary.txt"), summary.as_bytes())?;
    if angles {
        write_bytes(
            &out.join("angles.csv"),
            angle_table(&m.glass, &view)?.as_bytes(),
        )?;
    }
    if traces {
        for (bits, r) in &report.reports {
            let combo = crate::designer::PixelCombo::new(*bits, view.count())?;
            write_bytes(
                &out.join("traces").join(format!("{combo}.csv")),
                trace_csv(&r.wnmf_trace).as_bytes(),
            )?;
        }
    }
    m.save(&out.join(MANIFEST_FILE))?;
    Ok(Outcome {
        bounds_ok,
        message: summary,
    })
}

fn parse_views(spec: &str, view: &ViewSpec) -> anyhow::Result<Vec<usize>> {
    if spec == "all" {
        return Ok((1..=view.count()).collect());
    }
    spec.split(',')
        .map(|t| {
            let i: usize = t
                .trim()
                .parse()
                .with_context(|| format!("bad view index {t:?}"))?;
            view.offset(i)?;
            Ok(i)
        })
        .collect()
}

fn signed(x: f64) -> String {
    format!("{x:+.2}")
}

pub fn cmd_render(args: &CommonArgs, layers: &Path, views: &str) -> anyhow::Result<Outcome> {
    let mut m = args.resolve_manifest(Some(&layers.join(MANIFEST_FILE)))?;
    let view = m.view_spec()?;
    let cell = m.cell_spec()?;
    let front = read_layer_pgm(&layers.join(FRONT_FILE), LayerRole::Front)?;
    let rear = read_layer_pgm(&layers.join(REAR_FILE), LayerRole::Rear)?;
    let indices = parse_views(views, &view)?;
    let annotated = match m.glass.pixel_pitch_um {
        Some(_) => Some(annotate_view_angles(&m.glass, &view)?),
        None => None,
    };
    if args.out.is_none() {
        m.paths.out = Some(layers.join("views").display().to_string());
    }
    let out = out_dir(&m)?;
    let mut written = Vec::new();
    for idx in indices {
        let img = render_view(&front, &rear, &view, idx, &cell)?;
        let (u, v) = view.offset(idx)?;
        let mut name = format!("view_{idx:02}_u{u:+}_v{v:+}");
        if let Some(a) = annotated.as_ref().and_then(|a| a.angles.as_ref()) {
            let (tu, tv) = a[idx - 1];
            let _ = write!(name, "_tu{}_tv{}", signed(tu), signed(tv));
        }
        name.push_str(".pgm");
        let path = out.join(&name);
        write_gray_pgm(&path, &img)?;
        written.push(name);
    }
    m.save(&out.join(MANIFEST_FILE))?;
    Ok(Outcome::ok(written.join("\n")))
}

pub fn cmd_decode(
    args: &CommonArgs,
    image: &Path,
    code: Option<&Path>,
    view_index: Option<usize>,
) -> anyhow::Result<Outcome> {
    let m = args.resolve_manifest(None)?;
    let levels = m.levels;
    let rendered = read_gray_pgm(image)?;
    let bits = decode_bits(&rendered, &levels);
    let mut msg = String::new();
    for row in bits.rows() {
        msg.extend(row.iter().map(|&b| if b == 1 { '1' } else { '0' }));
        msg.push('\n');
    }
    let mut bounds_ok = true;
    if let Some(code_path) = code {
        let intended: Array2<u8> = if code_path.extension().is_some_and(|e| e == "json") {
            let stack = read_stack(code_path)?;
            let idx = view_index.unwrap_or(stack.view.center_index());
            stack.view.offset(idx)?;
            stack.codes[idx - 1].bits()
        } else {
            read_bit_pgm(code_path)?
        };
        if intended.dim() != bits.dim() {
            bail!(
                "image is {}x{} but the intended code is {}x{}",
                bits.nrows(),
                bits.ncols(),
                intended.nrows(),
                intended.ncols()
            );
        }
        let hamming = bits
            .iter()
            .zip(intended.iter())
            .filter(|(a, b)| a != b)
            .count();
        let ber = hamming as f64 / bits.len() as f64;
        let target = intended.mapv(|b| levels.level(b == 1));
        let rms = rms_error(&target, &rendered)?;
        let _ = writeln!(msg, "hamming={hamming} ber={ber:.6} rms={rms:.6}");
        if let Some(b) = m.bounds.max_view_ber {
            if ber > b {
                bounds_ok = false;
                let _ = writeln!(msg, "VIOLATION: ber {ber:.6} > {b}");
            }
        }
    }
    Ok(Outcome {
        bounds_ok,
        message: msg,
    })
}

pub fn cmd_angles(args: &CommonArgs) -> anyhow::Result<Outcome> {
    let m = args.resolve_manifest(None)?;
    let table = angle_table(&m.glass, &m.view_spec()?)?;
    if m.paths.out.is_some() {
        let out = out_dir(&m)?;
        write_bytes(&out.join("angles.csv"), table.as_bytes())?;
        m.save(&out.join(MANIFEST_FILE))?;
    }
    Ok(Outcome::ok(table))
}

/// Read a manifest from `dir/manifest.toml`.
pub fn manifest_in(dir: &Path) -> anyhow::Result<RunManifest> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(RunManifest::from_toml(&text)?)
}
