use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use cachecast::config::{canonical_key, parse_file, RunConfig, KEYS};
use cachecast::experiments::{interval_instance, run_interval_detailed, run_sweep, to_csv, Cell};
use cachecast::optimizer::trace_lines;
use cachecast::{conic, validate, Error, Result};

const OUT_ENV: &str = "CACHECAST_OUT_DIR";

fn cli() -> Command {
    let mut cmd = Command::new("cachecast")
        .about("Multicast beamforming and BS clustering for cache-enabled cloud RAN")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(Command::new("run").about("Optimize one interval and write its iteration trace"))
        .subcommand(Command::new("sweep").about("Average every (eta, cache size, policy, mode) cell into a CSV"))
        .subcommand(Command::new("validate").about("Run the oracle and invariant checks"))
        .subcommand(Command::new("dump-problem").about("Write the initial power-minimization SDP of one interval"))
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("key = value config file"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .global(true)
                .help(format!("output directory [default: ${OUT_ENV} or .]")),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .global(true)
                .help("worker threads [default: all cores]"),
        );
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(&*Box::leak(key.replace('_', "-").into_boxed_str()))
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .action(ArgAction::Set)
                .global(true)
                .help(*help),
        );
    }
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let file = match m.get_one::<String>("config") {
        Some(p) => parse_file(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (canonical_key(k), v.clone())))
        .collect();
    RunConfig::resolve(&file, &flags)
}

fn run(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let spec = &cfg.spec;
    let cell = Cell {
        eta: spec.etas[0],
        cache_size: spec.cache_sizes[0],
    };
    let r = run_interval_detailed(spec, cell, cfg.interval)?;
    let mut summary = String::new();
    let rep = &r.report;
    let _ = writeln!(summary, "interval\t{}", cfg.interval);
    let _ = writeln!(summary, "groups\t{}", r.instance.problem.num_groups());
    let _ = writeln!(summary, "feasible\t{}", rep.feasible);
    if let Some(sol) = &r.solution {
        let _ = writeln!(summary, "iterations\t{}", sol.iterations);
        let _ = writeln!(summary, "converged\t{}", sol.converged);
        let _ = writeln!(summary, "v_ini\t{:e}", sol.v_ini);
        let _ = writeln!(summary, "transmit_power_w\t{:e}", rep.transmit_power);
        let _ = writeln!(summary, "backhaul\t{:e}", rep.backhaul);
        let _ = writeln!(summary, "network_cost\t{:e}", rep.network_cost);
        if let Some(b) = sol.sdr_bound {
            let _ = writeln!(summary, "relaxation_bound\t{b:e}");
        }
        for (m, (g, q)) in r.instance.problem.groups.groups.iter().zip(&sol.clusters).enumerate() {
            let bs: Vec<String> = q.iter().map(usize::to_string).collect();
            let _ = writeln!(
                summary,
                "group {m}\tcontent {}\tusers {}\tcluster {}",
                g.content,
                g.members.len(),
                bs.join(",")
            );
        }
        write(out, "trace.tsv", &trace_lines(sol))?;
    }
    write(out, "run.txt", &summary)?;
    print!("{summary}");
    Ok(true)
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let mut rows = Vec::new();
    for spec in cfg.specs() {
        if cfg.verbose {
            eprintln!("sweep: policy {} mode {}", spec.policy.name(), spec.mode.name());
        }
        rows.extend(run_sweep(&spec)?);
    }
    let path = write(out, "sweep.csv", &to_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn check(cfg: &RunConfig) -> Result<bool> {
    let checks = validate::run_checks(&cfg.spec, 20, 3)?;
    let mut ok = true;
    for c in &checks {
        println!("{}\t{}\t{}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn dump(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let inst = interval_instance(&cfg.spec, cfg.interval)?;
    let n = inst.problem.dim();
    let obj = vec![nalgebra::DMatrix::identity(n, n); inst.problem.num_groups()];
    let sdp = inst.problem.assemble(&obj, None)?;
    let path = write(out, "problem.sdp", &conic::write_dump(&sdp))?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn dispatch(m: &ArgMatches) -> Result<bool> {
    let cfg = load_config(m)?;
    if let Some(&n) = m.get_one::<usize>("threads") {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let out = m
        .get_one::<String>("out")
        .cloned()
        .or_else(|| std::env::var(OUT_ENV).ok())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let (name, _) = m.subcommand().expect("subcommand is required");
    if name != "validate" {
        write(&out, "config.txt", &cfg.echo())?;
    }
    match name {
        "run" => run(&cfg, &out),
        "sweep" => sweep(&cfg, &out),
        "validate" => check(&cfg),
        "dump-problem" => dump(&cfg, &out),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    match dispatch(&m) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
