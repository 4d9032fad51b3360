//! `nullctl`: penalized HUM null controls and the convergence experiments
//! for the 1-D fast-diffusion system.

mod config;
mod svg;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use nullctl_core::experiments::{
    run_average_convergence, run_controlled, run_limit_check, run_mesh_sweep, run_tau_sweep, run_uncontrolled,
    write_limit_csv, write_sweep_csv, SweepRow,
};
use nullctl_core::solvers::fmt_num;
use nullctl_core::{CgOptions, Error};

use config::{RunConfig, OUT_DIR_ENV};
use svg::{loglog_chart, Series};

#[derive(Parser)]
#[command(
    name = "nullctl",
    version,
    about = "Penalized HUM null controls for a 1-D fast-diffusion reaction-diffusion system",
    arg_required_else_help = true,
    after_help = format!("Output goes to --out, else ${OUT_DIR_ENV}, else the current directory.\nExit codes: 0 success, 1 solver failure, 2 usage error.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled solve; writes trajectory.csv and summary.csv
    Simulate(Opts),
    /// Penalized HUM control; writes trajectory.csv and diagnostics.csv
    Control(Opts),
    /// HUM solves over --n-list with M scaled like N; writes sweep_mesh.csv
    SweepMesh(Opts),
    /// HUM solves over --tau-list; writes sweep_tau.csv
    SweepTau(Opts),
    /// Mean mismatch of uncontrolled solves over --tau-list; writes avg_convergence.csv
    AvgConvergence(Opts),
    /// Distance of v to the nonlocal limit over --tau-list; writes limit_check.csv
    LimitCheck(Opts),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cmd {
    Simulate,
    Control,
    SweepMesh,
    SweepTau,
    AvgConvergence,
    LimitCheck,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct Opts {
    /// Parameter preset: fig1 .. fig8
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value file; keys are the long flag names
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit
    #[arg(long)]
    dump_config: bool,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    /// Final time T
    #[arg(long)]
    horizon: Option<String>,
    /// Control window, `lo,hi`
    #[arg(long)]
    omega: Option<String>,
    /// zero | sine(k) | indicator(a,b) | constant(c)
    #[arg(long)]
    u0: Option<String>,
    #[arg(long)]
    v0: Option<String>,
    /// Interior grid nodes
    #[arg(long)]
    n: Option<String>,
    /// Time steps, or `auto` for the stability count
    #[arg(long)]
    m: Option<String>,
    /// `h4` or a positive number
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    rel_tol: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// Comma-separated N values for sweep-mesh
    #[arg(long)]
    n_list: Option<String>,
    /// Comma-separated decreasing tau values
    #[arg(long)]
    tau_list: Option<String>,
    /// two_over_tau | one_over_tau | <number>
    #[arg(long)]
    sigma_rule: Option<String>,
    /// Worker threads for sweeps
    #[arg(long)]
    jobs: Option<String>,
    /// Write every stride-th time level of trajectories
    #[arg(long)]
    stride: Option<String>,
    /// Also write log-log SVG charts for sweeps
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    out: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let fields: [(&'static str, &Option<String>); 21] = [
            ("a", &self.a),
            ("b", &self.b),
            ("c", &self.c),
            ("d", &self.d),
            ("tau", &self.tau),
            ("sigma", &self.sigma),
            ("horizon", &self.horizon),
            ("omega", &self.omega),
            ("u0", &self.u0),
            ("v0", &self.v0),
            ("n", &self.n),
            ("m", &self.m),
            ("eps", &self.eps),
            ("rel-tol", &self.rel_tol),
            ("max-iter", &self.max_iter),
            ("n-list", &self.n_list),
            ("tau-list", &self.tau_list),
            ("sigma-rule", &self.sigma_rule),
            ("jobs", &self.jobs),
            ("stride", &self.stride),
            ("out", &self.out),
        ];
        let mut pairs: Vec<_> = fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v.clone())))
            .collect();
        if self.svg {
            pairs.push(("svg", "true".into()));
        }
        pairs
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, msg).exit()
}

fn main() -> ExitCode {
    let (cmd, opts) = match Cli::parse().command {
        Command::Simulate(o) => (Cmd::Simulate, o),
        Command::Control(o) => (Cmd::Control, o),
        Command::SweepMesh(o) => (Cmd::SweepMesh, o),
        Command::SweepTau(o) => (Cmd::SweepTau, o),
        Command::AvgConvergence(o) => (Cmd::AvgConvergence, o),
        Command::LimitCheck(o) => (Cmd::LimitCheck, o),
    };
    let cfg = match RunConfig::resolve(opts.preset.as_deref(), opts.config.as_deref(), &opts.pairs()) {
        Ok(cfg) => cfg,
        Err(e) => usage_error(format!("{e:#}")),
    };
    if opts.dump_config {
        print!("{}", cfg.dump());
        return ExitCode::SUCCESS;
    }
    if cmd == Cmd::SweepMesh && cfg.n_list.len() < 3 {
        usage_error(format!("--n-list needs at least 3 sizes, got {}", cfg.n_list.len()));
    }
    match execute(cmd, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_usage() => usage_error(e),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_svg(cfg: &RunConfig, name: &str, title: &str, x_label: &str, series: &[Series]) -> Result<(), Error> {
    if cfg.svg {
        std::fs::create_dir_all(&cfg.out)?;
        std::fs::write(cfg.out.join(name), loglog_chart(title, x_label, series))?;
    }
    Ok(())
}

fn column(rows: &[SweepRow], f: impl Fn(&SweepRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| f(r).map(|y| (r.x, y))).collect()
}

fn execute(cmd: Cmd, cfg: &RunConfig) -> Result<(), Error> {
    let s = cfg.scenario();
    let m = cfg.steps()?;
    let cg = CgOptions::new(cfg.rel_tol, cfg.max_iter)?;
    let out = &cfg.out;
    match cmd {
        Cmd::Simulate => {
            let run = run_uncontrolled(&s, cfg.n, m)?;
            run.trajectory.write_csv(create(out, "trajectory.csv")?, cfg.stride)?;
            let last = run.trajectory.u.len() - 1;
            let t_last = run.trajectory.time_mesh.time(last);
            let mut w = csv::Writer::from_writer(create(out, "summary.csv")?);
            w.write_record(["t", "u_norm", "v_norm"])?;
            for (t, (nu, nv)) in [(0.0, run.initial_norms), (t_last, run.terminal_norms)] {
                w.write_record([fmt_num(t), fmt_num(nu), fmt_num(nv)])?;
                println!("t = {}: ||u|| = {}, ||v|| = {}", fmt_num(t), fmt_num(nu), fmt_num(nv));
            }
            w.flush()?;
            if let Some((step, norm)) = run.blow_up {
                return Err(Error::BlowUp { step, norm });
            }
        }
        Cmd::Control => {
            let run = run_controlled(&s, cfg.n, m, cfg.eps, &cg)?;
            let sol = &run.solution;
            sol.trajectory.write_csv(create(out, "trajectory.csv")?, cfg.stride)?;
            let row = SweepRow {
                x: sol.trajectory.grid.h(),
                nv: Some(sol.cost),
                nyt: Some(sol.target_norm),
                inf_f: Some(sol.inf_f),
                big_m: Some(sol.big_m),
                free_norm: Some(sol.free_norm),
                avg_diff: None,
                nyt_unweighted: Some(sol.target_norm_unweighted),
                n: cfg.n,
                m,
                status: nullctl_core::experiments::RowStatus::Ok,
            };
            write_sweep_csv(create(out, "diagnostics.csv")?, "dx", &[row])?;
            println!("eps = {}", fmt_num(run.eps));
            println!("cost = {}", fmt_num(sol.cost));
            println!("target = {}", fmt_num(sol.target_norm));
            println!("free = {}", fmt_num(sol.free_norm));
            println!("inf F = {}", fmt_num(sol.inf_f));
            println!("M = {}", fmt_num(sol.big_m));
            println!("cg iterations = {}, residual = {}", sol.cg_iterations, fmt_num(sol.cg_residual));
            println!("target <= M sqrt(eps): {}", run.target_bound_holds);
            println!("cost <= M: {}", run.cost_bound_holds);
        }
        Cmd::SweepMesh => {
            let sweep = run_mesh_sweep(&s, &cfg.n_list, (m, cfg.n), cfg.eps, &cg, cfg.jobs)?;
            write_sweep_csv(create(out, "sweep_mesh.csv")?, "dx", &sweep.rows)?;
            write_svg(
                cfg,
                "sweep_mesh.svg",
                "mesh refinement",
                "dx",
                &[
                    Series {
                        name: "Nv",
                        points: column(&sweep.rows, |r| r.nv),
                    },
                    Series {
                        name: "NyT",
                        points: column(&sweep.rows, |r| r.nyt),
                    },
                    Series {
                        name: "Inf_eps(F_eps)",
                        points: column(&sweep.rows, |r| r.inf_f),
                    },
                ],
            )?;
            if let Some(e) = sweep.failure {
                return Err(e);
            }
            if let Some(fit) = sweep.fit {
                println!("slope NyT vs dx = {} ({} points)", fmt_num(fit.slope), fit.points_used);
            }
        }
        Cmd::SweepTau => {
            let sweep = run_tau_sweep(&s, cfg.n, m, &cfg.tau_list, cfg.sigma_rule, cfg.eps, &cg, cfg.jobs)?;
            write_sweep_csv(create(out, "sweep_tau.csv")?, "tau", &sweep.rows)?;
            write_svg(
                cfg,
                "sweep_tau.svg",
                "uniformity in tau",
                "tau",
                &[
                    Series {
                        name: "big_M",
                        points: column(&sweep.rows, |r| r.big_m),
                    },
                    Series {
                        name: "free_norm",
                        points: column(&sweep.rows, |r| r.free_norm),
                    },
                ],
            )?;
            for r in &sweep.rows {
                println!(
                    "tau = {}: M = {}, free = {} [{}]",
                    fmt_num(r.x),
                    r.big_m.map(fmt_num).unwrap_or_default(),
                    r.free_norm.map(fmt_num).unwrap_or_default(),
                    r.status
                );
            }
            if let Some(e) = sweep.failure {
                return Err(e);
            }
        }
        Cmd::AvgConvergence => {
            let (rows, fit) = run_average_convergence(&s, cfg.n, m, &cfg.tau_list, cfg.sigma_rule, cfg.jobs)?;
            write_sweep_csv(create(out, "avg_convergence.csv")?, "tau", &rows)?;
            write_svg(
                cfg,
                "avg_convergence.svg",
                "mean mismatch",
                "tau",
                &[Series {
                    name: "avg_diff",
                    points: column(&rows, |r| r.avg_diff),
                }],
            )?;
            println!("slope avg_diff vs tau = {} ({} points)", fmt_num(fit.slope), fit.points_used);
        }
        Cmd::LimitCheck => {
            let rows = run_limit_check(&s, cfg.n, m, &cfg.tau_list, None, cfg.jobs)?;
            write_limit_csv(create(out, "limit_check.csv")?, &rows)?;
            write_svg(
                cfg,
                "limit_check.svg",
                "distance to the nonlocal limit",
                "tau",
                &[Series {
                    name: "limit_diff",
                    points: rows.iter().map(|r| (r.tau, r.discrepancy)).collect(),
                }],
            )?;
            for r in &rows {
                println!("tau = {}: ||v - mean y|| = {}", fmt_num(r.tau), fmt_num(r.discrepancy));
            }
        }
    }
    Ok(())
}
