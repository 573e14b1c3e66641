use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use subharnack::runner::{run, ConfigMap, RunConfig};
use subharnack::Error;

#[derive(Parser)]
#[command(name = "subharnack", version, about = "Harnack inequality experiments on the Heisenberg nilmanifold")]
struct Cli {
    /// Config file (key = value with [sections]); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative tolerance for Harnack margins.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args, Default)]
struct GridArgs {
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    /// Stencil order, 2 or 4.
    #[arg(long)]
    order: Option<u8>,
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    snap_every: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// zero, bump:<eps> or file:<path>
    #[arg(long)]
    u1: Option<String>,
    /// zero, bump:<eps> or file:<path>
    #[arg(long)]
    u2: Option<String>,
    /// smooth or noise
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Frame identities on H^n.
    Verify {
        /// Include contact axioms, isometry conditions and Sasakian items.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated list of n.
        #[arg(long)]
        dimensions: Option<String>,
    },
    /// Integrate the diffusion and write snapshots.
    Simulate {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Harnack margins along a diffusion run.
    Harnack {
        /// heat or sasakian
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        kappa1: Option<f64>,
        #[arg(long)]
        kappa2: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Coefficient family tables and condition residuals.
    Coeffs {
        /// cor1, cor2, cor3 or sasakian
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        kappa1: Option<f64>,
        #[arg(long)]
        kappa2: Option<f64>,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Minimal action between two points.
    Geodesic {
        /// Comma-separated coordinates (x.., y.., z).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x1: Option<String>,
        #[arg(long)]
        s0: Option<f64>,
        #[arg(long)]
        s1: Option<f64>,
        /// zero or const:<value>
        #[arg(long)]
        w: Option<String>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        /// cover or nilmanifold
        #[arg(long)]
        domain: Option<String>,
        /// Also run the refinement oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Riccati law, key inequality and transport identities along a flow line.
    Riccati {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
    },
}

fn put<T: ToString>(m: &mut ConfigMap, key: &str, v: Option<T>) {
    if let Some(v) = v {
        m.set(key, v.to_string());
    }
}

fn grid_flags(m: &mut ConfigMap, g: GridArgs) {
    put(m, "grid.n", g.n_grid);
    put(m, "grid.nz", g.nz);
    put(m, "grid.order", g.order);
    put(m, "time.t_start", g.t_start);
    put(m, "time.t_end", g.t_end);
    put(m, "time.snap_every", g.snap_every);
    put(m, "model.k", g.k);
    put(m, "model.u1", g.u1);
    put(m, "model.u2", g.u2);
    put(m, "initial.kind", g.initial);
    put(m, "initial.amplitude", g.amplitude);
}

fn flags(cli: Cli) -> ConfigMap {
    let mut m = ConfigMap::default();
    put(&mut m, "run.output", cli.output.map(|p| p.display().to_string()));
    put(&mut m, "run.seed", cli.seed);
    put(&mut m, "run.tolerance", cli.tolerance);
    let Some(cmd) = cli.command else { return m };
    match cmd {
        Cmd::Verify { all, trials, dimensions } => {
            m.set("run.command", "verify");
            if all {
                m.set("verify.all", "true");
            }
            put(&mut m, "verify.trials", trials);
            put(&mut m, "verify.dimensions", dimensions);
        }
        Cmd::Simulate { grid } => {
            m.set("run.command", "simulate");
            grid_flags(&mut m, grid);
        }
        Cmd::Harnack { preset, kappa1, kappa2, grid } => {
            m.set("run.command", "harnack");
            put(&mut m, "harnack.preset", preset);
            put(&mut m, "harnack.kappa1", kappa1);
            put(&mut m, "harnack.kappa2", kappa2);
            grid_flags(&mut m, grid);
        }
        Cmd::Coeffs { family, n, c, kappa1, kappa2, t_min, t_max, points } => {
            m.set("run.command", "coeffs");
            put(&mut m, "coeffs.family", family);
            put(&mut m, "model.dimension", n);
            put(&mut m, "coeffs.c", c);
            put(&mut m, "coeffs.kappa1", kappa1);
            put(&mut m, "coeffs.kappa2", kappa2);
            put(&mut m, "coeffs.t_min", t_min);
            put(&mut m, "coeffs.t_max", t_max);
            put(&mut m, "coeffs.points", points);
        }
        Cmd::Geodesic { x0, x1, s0, s1, w, segments, restarts, domain, oracle } => {
            m.set("run.command", "geodesic");
            put(&mut m, "geodesic.x0", x0);
            put(&mut m, "geodesic.x1", x1);
            put(&mut m, "geodesic.s0", s0);
            put(&mut m, "geodesic.s1", s1);
            put(&mut m, "geodesic.w", w);
            put(&mut m, "geodesic.segments", segments);
            put(&mut m, "geodesic.restarts", restarts);
            put(&mut m, "geodesic.domain", domain);
            if oracle {
                m.set("geodesic.oracle", "true");
            }
        }
        Cmd::Riccati { n, x0, t_end, dt, k } => {
            m.set("run.command", "riccati");
            put(&mut m, "model.dimension", n);
            put(&mut m, "riccati.x0", x0);
            put(&mut m, "riccati.t_end", t_end);
            put(&mut m, "riccati.dt", dt);
            put(&mut m, "model.k", k);
        }
    }
    m
}

fn execute(cli: Cli) -> Result<Vec<String>, Error> {
    let mut map = match &cli.config {
        Some(path) => {
            let m = ConfigMap::read(path)?;
            if m.is_empty() {
                return Err(Error::invalid(format!("config file {} is empty", path.display())));
            }
            m
        }
        None => ConfigMap::default(),
    };
    map.merge(&flags(cli));
    let cfg = RunConfig::from_map(&map)?;
    let summary = run(&cfg)?;
    let mut lines = summary.messages;
    lines.push(format!("wrote {} artifacts to {}", summary.artifacts.len(), cfg.output.display()));
    match summary.failure {
        Some(f) => {
            for l in &lines {
                println!("{l}");
            }
            Err(Error::Verification(f))
        }
        None => Ok(lines),
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("SUBHARNACK_THREADS") {
        match v.parse::<usize>() {
            Ok(t) if t > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("error: SUBHARNACK_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
