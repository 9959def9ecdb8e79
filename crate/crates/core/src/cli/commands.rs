use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{csv_line, fmt_float, out_path, read_json, vertices_csv, write_json, write_text};
use super::{Cli, CliError, Command, GainSource};
use crate::control::{lqr_admissible_set, simulate, SystemSpec};
use crate::error::Error;
use crate::network::{enumerate_regions, offset_beyond, retrofit_lqr, synth_satlqr, ActivationPattern, ReluNetwork};
use crate::numerics::Matrix;
use crate::polytope::Polytope;
use crate::verify::{stability_set, verify_stability, VerifyOptions};

fn require<'a>(p: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("{flag} is required for this command")))
}

fn load_system(cli: &Cli) -> Result<SystemSpec, CliError> {
    let spec: SystemSpec = read_json(require(&cli.system, "--system")?)?;
    spec.validate()?;
    Ok(spec)
}

fn load_network(cli: &Cli, spec: &SystemSpec) -> Result<ReluNetwork, CliError> {
    let net: ReluNetwork = read_json(require(&cli.network, "--network")?)?;
    let sys = spec.system()?;
    if net.input_dim() != sys.nx() || net.output_dim() != sys.nu() {
        return Err(CliError::Config(format!(
            "network maps {} -> {} but the system has nx={}, nu={}",
            net.input_dim(),
            net.output_dim(),
            sys.nx(),
            sys.nu()
        )));
    }
    Ok(net)
}

fn load_xin(cli: &Cli, spec: &SystemSpec) -> Result<Polytope, CliError> {
    let x_in: Polytope = read_json(require(&cli.xin, "--xin")?)?;
    if x_in.dim() != spec.a.rows() {
        return Err(CliError::Config(format!("X_in has dimension {}, the system has {}", x_in.dim(), spec.a.rows())));
    }
    x_in.bounding_box()?;
    Ok(x_in)
}

fn verify_options(cli: &Cli, spec: &SystemSpec) -> VerifyOptions {
    let k_ref = match spec.lqr() {
        Ok(sol) => Some(sol.k),
        Err(e) => {
            log::warn!("no LQR reference gain: {e}");
            None
        }
    };
    VerifyOptions { k_max: cli.kmax, residual_tol: cli.tol, k_ref, ..VerifyOptions::default() }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Verify => verify(cli),
        Command::Retrofit { k_source, gain } => retrofit(cli, *k_source, gain.as_deref()),
        Command::Saturate => saturate(cli),
        Command::Regions => regions(cli),
        Command::Simulate { x0, steps, samples } => sim(cli, x0.as_deref(), *steps, *samples),
        Command::Sets => sets(cli),
        Command::Synth { offset } => synth(cli, *offset),
    }
}

fn verify(cli: &Cli) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let x_in = load_xin(cli, &spec)?;
    let started = Instant::now();
    let cert = verify_stability(
        &spec.system()?,
        &net,
        &x_in,
        &spec.x,
        &spec.input_polytope()?,
        &verify_options(cli, &spec),
    )?;
    write_json(&out_path(&cli.out_dir, "certificate.json"), &cert)?;
    let c = &cert.stability.conditions;
    println!("verdict: {:?}", cert.verdict);
    println!("input constraints: {}", if cert.input.ok { "satisfied" } else { "violated" });
    if let Some(inv) = &cert.invariance {
        println!("X_in invariant: {}", inv.ok);
    }
    println!("bias residual: {:.3e}", c.bias_residual);
    println!("spectral radius: {:.6}", c.spectral_radius);
    if let Some(m) = c.lqr_match_residual {
        println!("LQR match residual: {m:.3e}");
    }
    match cert.stability.k_star {
        Some(k) => println!("reach set inside the stability set after k = {k} steps"),
        None => println!("no horizon up to {} certified entry into the stability set", cli.kmax),
    }
    println!(
        "{} MILPs, {} nodes, {:.2} s",
        cert.stats.milp_solves,
        cert.stats.nodes,
        started.elapsed().as_secs_f64()
    );
    Ok(if cert.verdict.is_stable() { 0 } else { 2 })
}

fn retrofit(cli: &Cli, source: GainSource, gain: Option<&Path>) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let k: Matrix = match source {
        GainSource::Lqr => spec.lqr()?.k,
        GainSource::File => {
            read_json(gain.ok_or_else(|| CliError::Config("--gain is required with --k-source file".into()))?)?
        }
    };
    let r = retrofit_lqr(&net, &k)?;
    write_json(&out_path(&cli.out_dir, "network_retrofit.json"), &r.network)?;
    println!("retrofit cost: {:.6e}", r.cost);
    Ok(0)
}

fn saturate(cli: &Cli) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let (lb, ub) = spec.input_bounds()?;
    write_json(&out_path(&cli.out_dir, "network_sat.json"), &net.saturate(&lb, &ub)?)?;
    println!("saturated network written ({} hidden layers)", net.num_hidden() + 2);
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub pattern: ActivationPattern,
    pub polytope: Polytope,
}

fn regions(cli: &Cli) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let x_in = load_xin(cli, &spec)?;
    let regions = enumerate_regions(&net, &x_in)?;
    let records: Vec<RegionRecord> =
        regions.iter().map(|r| RegionRecord { pattern: r.pattern.clone(), polytope: r.polytope.clone() }).collect();
    write_json(&out_path(&cli.out_dir, "regions.json"), &records)?;
    if x_in.dim() == 2 {
        let named: Vec<(String, &Polytope)> =
            regions.iter().enumerate().map(|(i, r)| (format!("region{i}"), &r.polytope)).collect();
        write_text(&out_path(&cli.out_dir, "regions.csv"), &vertices_csv(&named, &x_in)?)?;
    }
    println!("{} regions (at most {} patterns)", regions.len(), net.max_patterns().map_or("many".into(), |m| m.to_string()));
    Ok(0)
}

fn sample_in(set: &Polytope, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, CliError> {
    let bbox = set.bounding_box()?;
    for _ in 0..100_000 {
        let x: Vec<f64> = bbox.iter().map(|&(l, h)| if l < h { rng.gen_range(l..=h) } else { l }).collect();
        if set.contains_point(&x, 0.0) {
            return Ok(x);
        }
    }
    Err(CliError::Config("could not sample a point of X_in".into()))
}

fn sim(cli: &Cli, x0: Option<&[f64]>, steps: usize, samples: usize) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let sys = spec.system()?;
    let starts: Vec<Vec<f64>> = match x0 {
        Some(x) => vec![x.to_vec()],
        None => {
            let x_in = load_xin(cli, &spec)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            (0..samples).map(|_| sample_in(&x_in, &mut rng)).collect::<Result<_, _>>()?
        }
    };
    for (run, x0) in starts.iter().enumerate() {
        let traj = simulate(&sys, &net, x0, steps)?;
        let mut header = vec!["step".to_string()];
        header.extend((0..sys.nx()).map(|i| format!("x{i}")));
        header.extend((0..sys.nu()).map(|i| format!("u{i}")));
        let mut text = csv_line(header);
        for (j, x) in traj.states.iter().enumerate() {
            // the last state's input is the one the controller would apply next
            let u = match traj.inputs.get(j) {
                Some(u) => u.clone(),
                None => net.eval(x)?,
            };
            let mut row = vec![j.to_string()];
            row.extend(x.iter().chain(&u).map(|&v| fmt_float(v)));
            let _ = write!(text, "{}", csv_line(row));
        }
        let name = if starts.len() == 1 { "trajectory.csv".to_string() } else { format!("trajectory_{run}.csv") };
        write_text(&out_path(&cli.out_dir, &name), &text)?;
        let last = traj.states.last().expect("x0 is always present");
        println!("run {run}: x_{steps} = {:?}", last);
    }
    Ok(0)
}

fn sets(cli: &Cli) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let net = load_network(cli, &spec)?;
    let x_in = load_xin(cli, &spec)?;
    let sys = spec.system()?;
    let u = spec.input_polytope()?;
    let r_lqr = lqr_admissible_set(&sys, &spec.lqr()?.k, &spec.x, &u)?;
    let (r_eq, r_as) = stability_set(&sys, &net, &spec.x, &u)?;
    let cert = verify_stability(&sys, &net, &x_in, &spec.x, &u, &verify_options(cli, &spec))?;
    let mut named: Vec<(String, Polytope)> =
        vec![("r_lqr".into(), r_lqr), ("r_eq".into(), r_eq), ("r_as".into(), r_as), ("x_in".into(), x_in.clone())];
    if let Some(inv) = &cert.invariance {
        named.push(("reach_1".into(), inv.set.clone()));
    }
    if let (Some(k), Some(reach)) = (cert.stability.k_star, &cert.stability.reach_k) {
        named.push((format!("reach_{k}"), reach.clone()));
    }
    for (name, set) in &named {
        write_json(&out_path(&cli.out_dir, &format!("{name}.json")), set)?;
    }
    if sys.nx() == 2 {
        let refs: Vec<(String, &Polytope)> = named.iter().map(|(n, s)| (n.clone(), s)).collect();
        write_text(&out_path(&cli.out_dir, "sets.csv"), &vertices_csv(&refs, &spec.x)?)?;
    }
    let names: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    println!("wrote {}", names.join(", "));
    Ok(0)
}

fn synth(cli: &Cli, offset: Option<f64>) -> Result<u8, CliError> {
    let spec = load_system(cli)?;
    let k = spec.lqr()?.k;
    let offset = match offset {
        Some(a) => a,
        None => offset_beyond(&spec.x)?,
    };
    let (lb, ub) = spec.input_bounds()?;
    let net = synth_satlqr(&k, &lb, &ub, offset).map_err(|e| match e {
        Error::InvalidBounds(m) => CliError::Config(m),
        e => e.into(),
    })?;
    write_json(&out_path(&cli.out_dir, "network_synth.json"), &net)?;
    println!("LQR gain {:?}, offset {offset}", k.to_rows());
    Ok(0)
}
