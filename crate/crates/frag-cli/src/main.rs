//! `frag` — command-line front end for data-driven stabilization and
//! fragility analysis.
//!
//! Exit codes: 0 = success / feasible / verified, 2 = infeasible /
//! unverified, 1 = usage or numerical error.

use clap::{Args, Parser, Subcommand};
use fraglib::data::{
    load_gain, mat_from_value, mat_to_value, read_json, write_json, InformativityMatrix,
    NoiseModel, SystemModel, TrajectoryData,
};
use fraglib::fragility::{
    self, classify_data_fragility, FragilityClass, FragilityReport, VerifyTarget,
};
use fraglib::par::par_map;
use fraglib::sdp::SolveOptions;
use fraglib::stabilization::{check_informativity_full, check_informativity_reduced};
use fraglib::Error;
use nalgebra::DMatrix;
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "frag",
    version,
    about = "Data-driven stabilization and gain-fragility analysis for discrete-time LTI systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roll a system forward under a plan file and write the dataset
    Simulate(SimulateArgs),
    /// Decide informativity for stabilization and classify data fragility
    Check(CheckArgs),
    /// Design a stabilizing gain with a quadratic certificate from data
    Design(DesignArgs),
    /// Compute a fragility radius report (model- or data-based)
    Fragility(FragilityArgs),
    /// Re-verify a fragility radius by randomized sampling
    Verify(VerifyArgs),
    /// Sweep a 2-entry gain grid and write per-cell radii as CSV
    Contour(ContourArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// System JSON: {"A": [[..]], "B": [[..]]}
    #[arg(long)]
    system: PathBuf,
    /// Noise model JSON the realized disturbance must satisfy
    #[arg(long)]
    noise: PathBuf,
    /// Experiment plan JSON: optional "x0", "T", input "u" (explicit rows or
    /// {"kind":"gaussian","scale":s}), disturbance "w" (explicit,
    /// {"kind":"zero"}, {"kind":"uniform","lo":a,"hi":b} or
    /// {"kind":"gaussian","scale":s})
    #[arg(long)]
    plan: PathBuf,
    /// Output dataset path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    noise: PathBuf,
    /// Report path (omit to print to stdout only)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Design variant: "reduced" (eliminated gain) or "full"
    #[arg(long, default_value = "reduced")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    noise: PathBuf,
    /// Certificate output path
    #[arg(long)]
    out: PathBuf,
    /// Design variant: "reduced" or "full"
    #[arg(long, default_value = "reduced")]
    mode: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct FragilityArgs {
    /// One of: model-k, model-opt, data-k, data-opt
    #[arg(long)]
    mode: String,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    system: Option<PathBuf>,
    /// Gain JSON {"K": [[..]]}; required by the *-k modes
    #[arg(long)]
    gain: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    frag: FragilityArgs,
    /// Fraction of the computed radius at which to sample
    #[arg(long, default_value_t = 0.99)]
    frac: f64,
    /// Number of sampled perturbation/system pairs
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(Args)]
struct ContourArgs {
    /// "model" or "data"
    #[arg(long)]
    mode: String,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    system: Option<PathBuf>,
    /// Grid spec "k1min:k1max:steps,k2min:k2max:steps" (steps >= 2)
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful terminations; everything else is
            // a usage error under the exit-code contract
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(&a),
        Cmd::Check(a) => cmd_check(&a),
        Cmd::Design(a) => cmd_design(&a),
        Cmd::Fragility(a) => cmd_fragility(&a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::Contour(a) => cmd_contour(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Infeasible(_)
                | Error::NotInformative
                | Error::UnboundedSet
                | Error::NotSchur
                | Error::SingletonData { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn options(tol: f64) -> SolveOptions {
    SolveOptions {
        feas_tol: tol,
        ..SolveOptions::default()
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(a: &SimulateArgs) -> Result<u8, Error> {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    let sys = SystemModel::load(&a.system)?;
    let noise = NoiseModel::load(&a.noise)?;
    let plan = read_json(&a.plan)?;
    let plan = plan
        .as_object()
        .ok_or_else(|| Error::InvalidArgument("plan must be a JSON object".into()))?;
    let (n, m) = (sys.n(), sys.m());

    let x0: Vec<f64> = match plan.get("x0") {
        None => vec![0.0; n],
        Some(v) => v
            .as_array()
            .ok_or_else(|| Error::InvalidArgument("`x0` must be an array".into()))?
            .iter()
            .map(|e| {
                e.as_f64()
                    .ok_or_else(|| Error::InvalidArgument("`x0` entries must be numbers".into()))
            })
            .collect::<Result<_, _>>()?,
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);

    // input: explicit matrix, or a distribution drawn over T steps
    let u = match plan.get("u") {
        Some(v) if v.is_array() => mat_from_value(v, "u")?,
        spec => {
            let t = plan
                .get("T")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| Error::InvalidArgument("plan needs `T` when `u` is drawn".into()))?
                as usize;
            let scale = dist_scale(spec, "u")?;
            let mut mat = DMatrix::zeros(m, t);
            for j in 0..t {
                for i in 0..m {
                    let g: f64 = rng.sample(StandardNormal);
                    mat[(i, j)] = scale * g;
                }
            }
            mat
        }
    };
    let t = u.ncols();

    // disturbance: explicit, zero, uniform or gaussian
    let w = match plan.get("w") {
        None => None,
        Some(v) if v.is_array() => Some(mat_from_value(v, "w")?),
        Some(v) => {
            let kind = v
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| Error::InvalidArgument("`w` spec needs a `kind`".into()))?;
            match kind {
                "zero" => None,
                "uniform" => {
                    let lo = spec_num(v, "lo")?;
                    let hi = spec_num(v, "hi")?;
                    if !(hi > lo) {
                        return Err(Error::InvalidArgument("uniform needs lo < hi".into()));
                    }
                    let mut mat = DMatrix::zeros(n, t);
                    for j in 0..t {
                        for i in 0..n {
                            mat[(i, j)] = rng.gen_range(lo..hi);
                        }
                    }
                    Some(mat)
                }
                "gaussian" => {
                    let scale = spec_num(v, "scale")?;
                    let mut mat = DMatrix::zeros(n, t);
                    for j in 0..t {
                        for i in 0..n {
                            let g: f64 = rng.sample(StandardNormal);
                            mat[(i, j)] = scale * g;
                        }
                    }
                    Some(mat)
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown disturbance kind `{other}`"
                    )))
                }
            }
        }
    };

    let realized = w.clone().unwrap_or_else(|| DMatrix::zeros(n, t));
    if !noise.admits(&realized)? {
        return Err(Error::InvalidArgument(
            "realized disturbance violates the declared noise bound; refusing to write".into(),
        ));
    }

    let traj = TrajectoryData::simulate(&sys, &x0, u, w)?;
    traj.save(&a.out)?;
    println!("wrote {} (T = {})", a.out.display(), traj.len());
    Ok(0)
}

fn dist_scale(spec: Option<&Value>, what: &str) -> Result<f64, Error> {
    match spec {
        None => Ok(1.0),
        Some(v) => {
            let kind = v
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("`{what}` spec needs a `kind`")))?;
            if kind != "gaussian" {
                return Err(Error::InvalidArgument(format!(
                    "`{what}` supports explicit rows or kind \"gaussian\", got `{kind}`"
                )));
            }
            match v.get("scale") {
                None => Ok(1.0),
                Some(s) => s.as_f64().ok_or_else(|| {
                    Error::InvalidArgument(format!("`{what}` scale must be a number"))
                }),
            }
        }
    }
}

fn spec_num(v: &Value, key: &str) -> Result<f64, Error> {
    v.get(key)
        .and_then(|x| x.as_f64())
        .ok_or_else(|| Error::InvalidArgument(format!("spec needs numeric `{key}`")))
}

// ---------------------------------------------------------------------------
// check / design
// ---------------------------------------------------------------------------

fn load_data(dataset: &Path, noise: &Path) -> Result<(TrajectoryData, InformativityMatrix), Error> {
    let traj = TrajectoryData::load(dataset)?;
    let nm = NoiseModel::load(noise)?;
    let nmat = InformativityMatrix::from_trajectory(&traj, &nm)?;
    Ok((traj, nmat))
}

fn class_str(c: FragilityClass) -> &'static str {
    match c {
        FragilityClass::ExtremelyFragile => "extremely_fragile",
        FragilityClass::Intermediate => "intermediate",
        FragilityClass::Immune => "immune",
    }
}

fn cmd_check(a: &CheckArgs) -> Result<u8, Error> {
    let (traj, nmat) = load_data(&a.dataset, &a.noise)?;
    let dm = traj.matrices();
    let class = classify_data_fragility(&dm, &nmat);
    let opts = options(a.tol);
    let design = match a.mode.as_str() {
        "full" => check_informativity_full(&nmat, &opts),
        "reduced" => check_informativity_reduced(&nmat, &opts),
        other => {
            return Err(Error::InvalidArgument(format!(
                "mode must be \"reduced\" or \"full\", got `{other}`"
            )))
        }
    };
    let (informative, margin, source) = match design {
        Ok(cert) => (true, Some(cert.margin), Some(cert.source.as_str().to_string())),
        Err(Error::NotInformative) | Err(Error::Infeasible(_)) | Err(Error::UnboundedSet) => {
            (false, None, None)
        }
        Err(e) => return Err(e),
    };

    let mut obj = Map::new();
    obj.insert("informative".into(), Value::from(informative));
    obj.insert("classification".into(), Value::from(class_str(class)));
    obj.insert("bounded".into(), Value::from(dm.is_bounded()));
    obj.insert("singleton".into(), Value::from(nmat.is_singleton()));
    obj.insert(
        "margin".into(),
        margin.map(Value::from).unwrap_or(Value::Null),
    );
    obj.insert(
        "source".into(),
        source.map(Value::from).unwrap_or(Value::Null),
    );
    obj.insert("seed".into(), Value::from(a.seed));
    let report = Value::Object(obj);

    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if informative { 0 } else { 2 })
}

fn cmd_design(a: &DesignArgs) -> Result<u8, Error> {
    let (_, nmat) = load_data(&a.dataset, &a.noise)?;
    let opts = options(a.tol);
    let cert = match a.mode.as_str() {
        "full" => check_informativity_full(&nmat, &opts)?,
        "reduced" => check_informativity_reduced(&nmat, &opts)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "mode must be \"reduced\" or \"full\", got `{other}`"
            )))
        }
    };
    cert.save(&a.out)?;
    println!(
        "wrote {} (margin {:.3e}, source {})",
        a.out.display(),
        cert.margin,
        cert.source.as_str()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// fragility / verify
// ---------------------------------------------------------------------------

enum AnalysisInput {
    Model(SystemModel),
    Data(InformativityMatrix),
}

fn fragility_report(a: &FragilityArgs) -> Result<(FragilityReport, AnalysisInput), Error> {
    let opts = options(a.tol);
    let need = |p: &Option<PathBuf>, what: &str| -> Result<PathBuf, Error> {
        p.clone()
            .ok_or_else(|| Error::InvalidArgument(format!("mode `{}` needs --{what}", a.mode)))
    };
    match a.mode.as_str() {
        "model-k" | "model-opt" => {
            let sys = SystemModel::load(&need(&a.system, "system")?)?;
            let rep = if a.mode == "model-k" {
                let k = load_gain(&need(&a.gain, "gain")?)?;
                fragility::lambda_model_given_k(&sys, &k, a.seed, &opts)?
            } else {
                fragility::lambda_model_opt(&sys, a.seed, &opts)?
            };
            Ok((rep, AnalysisInput::Model(sys)))
        }
        "data-k" | "data-opt" => {
            let (_, nmat) = load_data(
                &need(&a.dataset, "dataset")?,
                &need(&a.noise, "noise")?,
            )?;
            let rep = if a.mode == "data-k" {
                let k = load_gain(&need(&a.gain, "gain")?)?;
                fragility::lambda_data_given_k_auto(&nmat, &k, a.seed, &opts)?
            } else {
                fragility::lambda_data_opt_auto(&nmat, a.seed, &opts)?
            };
            Ok((rep, AnalysisInput::Data(nmat)))
        }
        other => Err(Error::InvalidArgument(format!(
            "mode must be one of model-k, model-opt, data-k, data-opt; got `{other}`"
        ))),
    }
}

fn cmd_fragility(a: &FragilityArgs) -> Result<u8, Error> {
    let (rep, _) = fragility_report(a)?;
    let v = rep.to_value();
    if let Some(out) = &a.out {
        write_json(out, &v)?;
    }
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8, Error> {
    let (rep, input) = fragility_report(&a.frag)?;
    // singleton data delegates the whole analysis to the recovered model,
    // so the sampling target follows the report kind, not the input flavor
    let recovered;
    let target = match (&input, rep.kind.is_data()) {
        (AnalysisInput::Model(sys), _) => VerifyTarget::Model(sys),
        (AnalysisInput::Data(nmat), true) => VerifyTarget::Data(nmat),
        (AnalysisInput::Data(nmat), false) => {
            recovered = nmat.recover()?;
            VerifyTarget::Model(&recovered)
        }
    };
    let outcome = fragility::verify_perturbation(
        target,
        &rep.k_star,
        rep.lambda,
        a.frac,
        a.samples,
        a.frag.seed,
    )?;

    let mut obj = Map::new();
    obj.insert("kind".into(), Value::from(rep.kind.as_str()));
    obj.insert("lambda".into(), Value::from(rep.lambda));
    obj.insert("radius".into(), Value::from(outcome.radius));
    obj.insert("frac".into(), Value::from(a.frac));
    obj.insert("samples".into(), Value::from(outcome.samples));
    obj.insert("passed".into(), Value::from(outcome.passed));
    obj.insert(
        "failure_count".into(),
        Value::from(outcome.failures.len()),
    );
    let failures: Vec<Value> = outcome
        .failures
        .iter()
        .map(|f| {
            let mut e = Map::new();
            e.insert("A".into(), mat_to_value(&f.system.a));
            e.insert("B".into(), mat_to_value(&f.system.b));
            e.insert("Delta".into(), mat_to_value(&f.delta));
            e.insert(
                "spectral_radius".into(),
                Value::from(f.closed_loop_radius),
            );
            Value::Object(e)
        })
        .collect();
    obj.insert("failures".into(), Value::Array(failures));
    obj.insert("seed".into(), Value::from(a.frag.seed));
    let report = Value::Object(obj);

    if let Some(out) = &a.frag.out {
        write_json(out, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if outcome.passed { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// contour
// ---------------------------------------------------------------------------

struct Axis {
    min: f64,
    max: f64,
    steps: usize,
}

impl Axis {
    fn at(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * (i as f64) / ((self.steps - 1) as f64)
    }
}

fn parse_grid(spec: &str) -> Result<(Axis, Axis), Error> {
    let parse_axis = |s: &str| -> Result<Axis, Error> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "axis spec `{s}` must be min:max:steps"
            )));
        }
        let min: f64 = parts[0]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad axis min `{}`", parts[0])))?;
        let max: f64 = parts[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad axis max `{}`", parts[1])))?;
        let steps: usize = parts[2]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad axis steps `{}`", parts[2])))?;
        if steps < 2 {
            return Err(Error::InvalidArgument(
                "grid needs at least 2 steps per axis".into(),
            ));
        }
        if !(max > min) {
            return Err(Error::InvalidArgument("axis needs min < max".into()));
        }
        Ok(Axis { min, max, steps })
    };
    let (a, b) = spec
        .split_once(',')
        .ok_or_else(|| Error::InvalidArgument("grid spec must have two axes".into()))?;
    Ok((parse_axis(a)?, parse_axis(b)?))
}

fn cmd_contour(a: &ContourArgs) -> Result<u8, Error> {
    let opts = options(a.tol);
    let input = match a.mode.as_str() {
        "model" => {
            let p = a.system.clone().ok_or_else(|| {
                Error::InvalidArgument("mode `model` needs --system".into())
            })?;
            AnalysisInput::Model(SystemModel::load(&p)?)
        }
        "data" => {
            let d = a.dataset.clone().ok_or_else(|| {
                Error::InvalidArgument("mode `data` needs --dataset".into())
            })?;
            let w = a.noise.clone().ok_or_else(|| {
                Error::InvalidArgument("mode `data` needs --noise".into())
            })?;
            AnalysisInput::Data(load_data(&d, &w)?.1)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "mode must be \"model\" or \"data\", got `{other}`"
            )))
        }
    };
    let (n, m) = match &input {
        AnalysisInput::Model(sys) => (sys.n(), sys.m()),
        AnalysisInput::Data(nm) => (nm.n(), nm.m()),
    };
    if m * n != 2 {
        return Err(Error::Dimension(format!(
            "contour needs a 2-entry gain, this system has m*n = {}",
            m * n
        )));
    }
    let (ax1, ax2) = parse_grid(&a.grid)?;

    let mut cells = Vec::with_capacity(ax1.steps * ax2.steps);
    for i in 0..ax1.steps {
        for j in 0..ax2.steps {
            cells.push((ax1.at(i), ax2.at(j)));
        }
    }

    let lambda_at = |k1: f64, k2: f64| -> Option<f64> {
        let k = if m == 1 {
            DMatrix::from_row_slice(1, 2, &[k1, k2])
        } else {
            DMatrix::from_column_slice(2, 1, &[k1, k2])
        };
        let res = match &input {
            AnalysisInput::Model(sys) => {
                fragility::lambda_model_given_k(sys, &k, a.seed, &opts)
            }
            AnalysisInput::Data(nmat) => {
                fragility::lambda_data_given_k_auto(nmat, &k, a.seed, &opts)
            }
        };
        res.ok().map(|r| r.lambda)
    };
    let values = par_map(&cells, |(k1, k2)| lambda_at(*k1, *k2));

    let mut csv = String::from("k1,k2,lambda\n");
    for ((k1, k2), lam) in cells.iter().zip(values.iter()) {
        match lam {
            Some(l) => csv.push_str(&format!("{k1},{k2},{l}\n")),
            None => csv.push_str(&format!("{k1},{k2},-1\n")),
        }
    }
    std::fs::write(&a.out, csv)?;
    println!(
        "wrote {} ({} x {} cells)",
        a.out.display(),
        ax1.steps,
        ax2.steps
    );
    Ok(0)
}
