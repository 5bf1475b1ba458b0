//! Batch driver: parse a run configuration, dispatch to the library, and
//! emit a machine-readable report.
//!
//! The config is a JSON object read from `--config` (or stdin) holding a
//! `command` field plus the command's parameter block; the command may
//! equivalently be given as a positional argument. Results go to stdout as
//! JSON; CSV artifacts go to `--out` when provided. Exit codes: 0 all checks
//! pass, 2 configuration/schema violation, 3 numerical check failure.

use clap::Parser;
use luttlab::effective::{
    exponents, kappa_drude, nus_from_couplings, velocities, Channel, CorrelatorLabel,
    EffectiveCouplings, MomentumProfile, NuSet,
};
use luttlab::fock_ed::{
    build_hamiltonian, diagonalize, enumerate_basis, LatticeSpec, ObservableKind, Potential, Sector,
};
use luttlab::multiscale::{
    anomaly_tau, partition_check, propagator_norms, tadpole_check, CutoffFamily,
};
use luttlab::response::{
    drude, drude_table, free_drude_table, free_response_table, response_table, susceptibility,
    vertex_functions, ward_check_density, ward_check_drude, ward_check_vertex, MatsubaraGrid,
    ResponseKind, DEGENERACY_TOL_DEFAULT,
};
use luttlab::rg_flow::{g1_bound_check, run_flow, z_flow, BetaFunction, RccVector, ZModel};
use luttlab::verify;
use serde::Deserialize;
use serde_json::{json, Value};
use std::io::{IsTerminal, Read};
use std::path::PathBuf;

/// Run outcome: a JSON results block, the aggregated pass flag, named CSV
/// artifacts, and content hashes of the model specifications involved.
struct Outcome {
    results: Value,
    pass: bool,
    artifacts: Vec<(String, String)>,
    spec_hashes: Vec<(String, String)>,
}

enum CliError {
    /// Malformed or out-of-domain configuration → exit code 2.
    Schema(String),
    /// A computation failed in a way the config did not cause → exit code 3.
    Numeric(String),
}

impl From<luttlab::Error> for CliError {
    fn from(e: luttlab::Error) -> Self {
        use luttlab::Error::*;
        match e {
            InvalidSpec(_) | InvalidSector(_) | CostGuard(_) | Serde(_) => {
                CliError::Schema(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "luttlab", about = "Batch driver for the luttlab numerical laboratory")]
struct Cli {
    /// Subcommand: ed | response | ward | exponents | correlate | multiscale |
    /// flow | verify-all (may instead be given as "command" in the config).
    command: Option<String>,
    /// JSON config file; stdin is read when omitted and piped.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized identity sweeps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier applied to every pass/fail tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Worker threads for the verification suite.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    let start = std::time::Instant::now();
    match run(&cli) {
        Ok((command, config_echo, outcome)) => {
            if let Some(dir) = &cli.out {
                if let Err(e) = write_artifacts(dir, &outcome.artifacts) {
                    eprintln!("error: cannot write artifacts: {e}");
                    std::process::exit(3);
                }
            }
            let report = json!({
                "command": command,
                "config": config_echo,
                "seed": cli.seed,
                "tol_scale": cli.tol_scale,
                "spec_hashes": Value::Object(
                    outcome.spec_hashes.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()
                ),
                "results": outcome.results,
                "pass": outcome.pass,
                "wall_time_seconds": start.elapsed().as_secs_f64(),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            std::process::exit(if outcome.pass { 0 } else { 3 });
        }
        Err(CliError::Schema(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Numeric(msg)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "error": msg, "pass": false }))
                    .expect("report serializes")
            );
            std::process::exit(3);
        }
    }
}

fn run(cli: &Cli) -> CliResult<(String, Value, Outcome)> {
    let raw = read_config(cli)?;
    let mut obj = match raw {
        Value::Object(m) => m,
        Value::Null => serde_json::Map::new(),
        other => {
            return Err(CliError::Schema(format!(
                "config must be a JSON object, got {other}"
            )))
        }
    };
    let config_command = match obj.remove("command") {
        Some(Value::String(s)) => Some(s),
        Some(other) => {
            return Err(CliError::Schema(format!(
                "\"command\" must be a string, got {other}"
            )))
        }
        None => None,
    };
    let command = match (cli.command.clone(), config_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Schema(format!(
                "positional command {a:?} conflicts with config command {b:?}"
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(CliError::Schema(
                "no command given (positional argument or \"command\" config field)".into(),
            ))
        }
    };
    let params = Value::Object(obj);
    let echo = params.clone();
    let outcome = match command.as_str() {
        "ed" => cmd_ed(params),
        "response" => cmd_response(params),
        "ward" => cmd_ward(params, cli.tol_scale),
        "exponents" => cmd_exponents(params, cli.seed, cli.tol_scale),
        "correlate" => cmd_correlate(params, cli.tol_scale),
        "multiscale" => cmd_multiscale(params, cli.tol_scale),
        "flow" => cmd_flow(params),
        "verify-all" => cmd_verify_all(params, cli.threads),
        other => Err(CliError::Schema(format!("unknown command {other:?}"))),
    }?;
    Ok((command, echo, outcome))
}

fn read_config(cli: &Cli) -> CliResult<Value> {
    let text = if let Some(path) = &cli.config {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?
    } else if std::io::stdin().is_terminal() {
        "{}".to_string()
    } else {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| CliError::Schema(format!("cannot read stdin: {e}")))?;
        if buf.trim().is_empty() {
            "{}".to_string()
        } else {
            buf
        }
    };
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("config is not valid JSON: {e}")))
}

fn write_artifacts(dir: &PathBuf, artifacts: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in artifacts {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn parse_params<T: for<'de> Deserialize<'de>>(params: Value) -> CliResult<T> {
    serde_json::from_value(params).map_err(|e| CliError::Schema(format!("invalid parameters: {e}")))
}

// ---------------------------------------------------------------------------
// Shared lattice parameter block
// ---------------------------------------------------------------------------

fn default_potential() -> Potential {
    Potential::Delta { amplitude: 1.0 }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeParams {
    #[serde(rename = "L")]
    l: usize,
    #[serde(default = "four")]
    beta: f64,
    #[serde(default = "mu_default")]
    mu_bar: f64,
    #[serde(default)]
    lambda: f64,
    #[serde(default = "default_potential")]
    potential: Potential,
    /// Matsubara frequency cutoff index of the evaluation grid.
    #[serde(default = "three")]
    cutoff: usize,
}

fn four() -> f64 {
    4.0
}
fn mu_default() -> f64 {
    0.3
}
fn three() -> usize {
    3
}

impl LatticeParams {
    fn spec(&self) -> CliResult<LatticeSpec> {
        let spec = LatticeSpec {
            l: self.l,
            mu_bar: self.mu_bar,
            lambda: self.lambda,
            potential: self.potential.clone(),
            beta: self.beta,
        };
        spec.validate()?;
        Ok(spec)
    }
}

const ED_L_LIMIT: usize = 6;

fn diagonalized(
    spec: &LatticeSpec,
) -> CliResult<(luttlab::fock_ed::FockBasis, luttlab::fock_ed::Spectrum)> {
    if spec.l > ED_L_LIMIT {
        return Err(CliError::Schema(format!(
            "full diagonalization is limited to L <= {ED_L_LIMIT}; got L = {}",
            spec.l
        )));
    }
    let basis = enumerate_basis(spec.l, Sector::Full)?;
    let h = build_hamiltonian(spec, &basis)?;
    let spectrum = diagonalize(&h, &basis)?;
    Ok((basis, spectrum))
}

// ---------------------------------------------------------------------------
// ed
// ---------------------------------------------------------------------------

fn cmd_ed(params: Value) -> CliResult<Outcome> {
    let p: LatticeParams = parse_params(params)?;
    let spec = p.spec()?;
    let (_, spectrum) = diagonalized(&spec)?;
    let mut energies = spectrum.all_energies();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut csv = String::from("index,energy\n");
    for (i, e) in energies.iter().enumerate() {
        csv.push_str(&format!("{i},{e:.12e}\n"));
    }
    let results = json!({
        "dimension": energies.len(),
        "ground_energy": spectrum.ground_energy(),
        "partition_function": spectrum.partition(spec.beta),
    });
    Ok(Outcome {
        results,
        pass: true,
        artifacts: vec![("energies.csv".into(), csv)],
        spec_hashes: vec![("lattice".into(), spec.content_hash())],
    })
}

// ---------------------------------------------------------------------------
// response
// ---------------------------------------------------------------------------

fn cmd_response(params: Value) -> CliResult<Outcome> {
    let p: LatticeParams = parse_params(params)?;
    let spec = p.spec()?;
    let grid = MatsubaraGrid::new(spec.l, spec.beta, p.cutoff.max(3));
    let (charge, dhat) = if spec.lambda == 0.0 {
        (
            free_response_table(&spec, ResponseKind::Density(ObservableKind::C), &grid),
            free_drude_table(&spec, &grid),
        )
    } else {
        let (basis, spectrum) = diagonalized(&spec)?;
        (
            response_table(
                &spec,
                &basis,
                &spectrum,
                ResponseKind::Density(ObservableKind::C),
                &grid,
                DEGENERACY_TOL_DEFAULT,
            )?,
            drude_table(&spec, &basis, &spectrum, &grid, DEGENERACY_TOL_DEFAULT)?,
        )
    };
    let kappa = susceptibility(&charge)?;
    let d = drude(&dhat)?;
    let mut results = json!({
        "kappa": kappa,
        "drude": d,
        "ratio": d.extrapolated / kappa.extrapolated,
    });
    // Effective-model reference values when the first-order match applies.
    if spec.mu_bar != 0.0 && spec.mu_bar.abs() < 1.0 {
        if let Ok((_, barred)) = luttlab::effective::hubbard_match_first_order(&spec) {
            if let Ok(nus) = nus_from_couplings(&barred) {
                if let Ok(kd) = kappa_drude(&nus, barred.c) {
                    results["effective_prediction"] = serde_json::to_value(&kd).unwrap();
                }
            }
        }
    }
    Ok(Outcome {
        results,
        pass: true,
        artifacts: vec![
            ("omega_charge.csv".into(), charge.to_csv()),
            ("d_hat.csv".into(), dhat.to_csv()),
        ],
        spec_hashes: vec![("lattice".into(), spec.content_hash())],
    })
}

// ---------------------------------------------------------------------------
// ward
// ---------------------------------------------------------------------------

fn cmd_ward(params: Value, tol_scale: f64) -> CliResult<Outcome> {
    let p: LatticeParams = parse_params(params)?;
    let spec = p.spec()?;
    let (basis, spectrum) = diagonalized(&spec)?;
    let grid = MatsubaraGrid::new(spec.l, spec.beta, p.cutoff);
    let c = response_table(
        &spec,
        &basis,
        &spectrum,
        ResponseKind::Density(ObservableKind::C),
        &grid,
        DEGENERACY_TOL_DEFAULT,
    )?;
    let jrho = response_table(&spec, &basis, &spectrum, ResponseKind::JRho, &grid, DEGENERACY_TOL_DEFAULT)?;
    let rhoj = response_table(&spec, &basis, &spectrum, ResponseKind::RhoJ, &grid, DEGENERACY_TOL_DEFAULT)?;
    let dhat = drude_table(&spec, &basis, &spectrum, &grid, DEGENERACY_TOL_DEFAULT)?;
    let r2 = ward_check_density(&c, &jrho);
    let r3 = ward_check_drude(&rhoj, &dhat);
    let tol_pair = 1e-9 * tol_scale;
    let mut pass = r2.max_residual <= tol_pair && r3.max_residual <= tol_pair;
    let mut results = json!({
        "density_identity": r2,
        "stiffness_identity": r3,
        "tolerance": tol_pair,
    });
    // The three-point identity is evaluated on small systems only.
    if spec.l <= 4 {
        let k0s: Vec<f64> = (0..3)
            .map(|m| 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / spec.beta)
            .collect();
        let p0s: Vec<f64> = (-2..=2)
            .map(|m| 2.0 * std::f64::consts::PI * m as f64 / spec.beta)
            .collect();
        let mut worst = 0.0f64;
        for (n_k, n_p) in [(0i64, 1i64), (1, 1)] {
            let v = vertex_functions(&spec, &basis, &spectrum, n_k, n_p, &k0s, &p0s, luttlab::fock_ed::UP)?;
            let rep = ward_check_vertex(&spec, &basis, &spectrum, n_k, n_p, &v, luttlab::fock_ed::UP);
            worst = worst.max(rep.max_residual);
        }
        let tol_vertex = 1e-8 * tol_scale;
        pass = pass && worst <= tol_vertex;
        results["vertex_identity"] = json!({ "max_residual": worst, "tolerance": tol_vertex });
    }
    Ok(Outcome {
        results,
        pass,
        artifacts: vec![("omega_charge.csv".into(), c.to_csv()), ("d_hat.csv".into(), dhat.to_csv())],
        spec_hashes: vec![("lattice".into(), spec.content_hash())],
    })
}

// ---------------------------------------------------------------------------
// exponents
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NuParams {
    rho: f64,
    sigma: f64,
    four: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExponentsParams {
    nu: NuParams,
    #[serde(default = "one")]
    c: f64,
    /// Additional random draws for the identity sweep (seeded by --seed).
    #[serde(default)]
    draws: usize,
}

fn one() -> f64 {
    1.0
}

fn relation_residuals(nu: &NuSet, c_bar: f64) -> luttlab::Result<(Vec<(String, f64)>, Value)> {
    let ex = exponents(nu)?;
    let vs = velocities(nu)?;
    let kd = kappa_drude(nu, c_bar)?;
    let k = ex.k;
    let residuals = vec![
        ("duality".to_string(), (k * ex.k_tilde - 1.0).abs()),
        ("eta_vs_k".to_string(), (4.0 * ex.eta_rho - (k + 1.0 / k - 2.0)).abs()),
        (
            "mixing_charge".to_string(),
            ((2.0 + 2.0 * ex.eta_rho - 2.0 * ex.zeta_rho) - (k + 1.0)).abs(),
        ),
        (
            "mixing_pairing".to_string(),
            ((2.0 + 2.0 * ex.eta_rho + 2.0 * ex.zeta_rho) - (1.0 / k + 1.0)).abs(),
        ),
        (
            "diagonal_pairing".to_string(),
            ((2.0 + 4.0 * ex.eta_rho) - (k + 1.0 / k)).abs(),
        ),
        (
            "stiffness_ratio".to_string(),
            (kd.drude / kd.kappa - (c_bar * vs.ratio(Channel::Charge)).powi(2)).abs(),
        ),
    ];
    let summary = json!({
        "exponents": ex,
        "velocities": {
            "charge": vs.ratio(Channel::Charge),
            "spin": vs.ratio(Channel::Spin),
        },
        "kappa_drude": kd,
    });
    Ok((residuals, summary))
}

fn cmd_exponents(params: Value, seed: u64, tol_scale: f64) -> CliResult<Outcome> {
    use rand::{Rng, SeedableRng};
    let p: ExponentsParams = parse_params(params)?;
    let nu = NuSet { nu_rho: p.nu.rho, nu_sigma: p.nu.sigma, nu_4: p.nu.four };
    let (residuals, summary) = relation_residuals(&nu, p.c)?;
    let mut worst = residuals.iter().map(|&(_, r)| r).fold(0.0f64, f64::max);
    let mut csv = String::from("relation,residual\n");
    for (name, r) in &residuals {
        csv.push_str(&format!("{name},{r:.3e}\n"));
    }
    let mut sweep_worst = None;
    if p.draws > 0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut w = 0.0f64;
        let mut done = 0;
        while done < p.draws {
            let draw = NuSet {
                nu_rho: rng.gen_range(-0.2..0.2),
                nu_sigma: rng.gen_range(-0.2..0.2),
                nu_4: rng.gen_range(-0.2..0.2),
            };
            let c_bar = rng.gen_range(0.5..2.0);
            let Ok((rs, _)) = relation_residuals(&draw, c_bar) else { continue };
            done += 1;
            w = rs.iter().map(|&(_, r)| r).fold(w, f64::max);
        }
        sweep_worst = Some(w);
        worst = worst.max(w);
    }
    let tol = 1e-12 * tol_scale;
    let results = json!({
        "summary": summary,
        "residuals": Value::Object(
            residuals.iter().map(|(k, v)| (k.clone(), json!(v))).collect()
        ),
        "sweep_worst_residual": sweep_worst,
        "tolerance": tol,
    });
    Ok(Outcome {
        results,
        pass: worst <= tol,
        artifacts: vec![("relations.csv".into(), csv)],
        spec_hashes: vec![],
    })
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingParams {
    #[serde(default)]
    g1_perp: f64,
    #[serde(default)]
    g_par: f64,
    #[serde(default)]
    g_perp: f64,
    #[serde(default)]
    g4: f64,
    #[serde(default)]
    delta: f64,
    #[serde(default = "one")]
    c: f64,
}

impl CouplingParams {
    fn build(&self) -> EffectiveCouplings {
        EffectiveCouplings {
            g1_perp: self.g1_perp,
            g_par: self.g_par,
            g_perp: self.g_perp,
            g4: self.g4,
            delta: self.delta,
            c: self.c,
            h_hat: MomentumProfile::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrelateParams {
    couplings: CouplingParams,
    #[serde(default = "default_labels")]
    labels: Vec<String>,
    #[serde(default = "one")]
    z: f64,
}

fn default_labels() -> Vec<String> {
    vec!["2C".into(), "2SC".into(), "1SC".into()]
}

fn parse_label(s: &str) -> CliResult<CorrelatorLabel> {
    let label = match s.to_uppercase().as_str() {
        "1C" => CorrelatorLabel::OneC,
        "1S1" => CorrelatorLabel::OneS1,
        "1S2" => CorrelatorLabel::OneS2,
        "1S3" => CorrelatorLabel::OneS3,
        "1SC" => CorrelatorLabel::OneSC,
        "2C" => CorrelatorLabel::TwoC,
        "2S1" => CorrelatorLabel::TwoS1,
        "2S2" => CorrelatorLabel::TwoS2,
        "2S3" => CorrelatorLabel::TwoS3,
        "2SC" => CorrelatorLabel::TwoSC,
        "2TC1" => CorrelatorLabel::TwoTC1,
        "2TC2" => CorrelatorLabel::TwoTC2,
        "2TC3" => CorrelatorLabel::TwoTC3,
        other => return Err(CliError::Schema(format!("unknown correlator label {other:?}"))),
    };
    Ok(label)
}

fn cmd_correlate(params: Value, tol_scale: f64) -> CliResult<Outcome> {
    let p: CorrelateParams = parse_params(params)?;
    let ec = p.couplings.build();
    let ex = exponents(&nus_from_couplings(&ec)?)?;
    let mut rows = Vec::new();
    let mut csv = String::from("label,fitted_exponent,predicted_exponent,rel_dev,fit_residual\n");
    let tol = 0.01 * tol_scale;
    let mut pass = true;
    for name in &p.labels {
        let label = parse_label(name)?;
        let fit = luttlab::correlators::fit_op_exponent(label, &ec, p.z, 30)?;
        let predicted = ex.two_x(label);
        let rel = (fit.exponent - predicted).abs() / predicted;
        pass = pass && rel <= tol;
        csv.push_str(&format!(
            "{name},{:.6},{predicted:.6},{rel:.3e},{:.3e}\n",
            fit.exponent, fit.residual
        ));
        rows.push(json!({
            "label": name,
            "fitted": fit,
            "predicted": predicted,
            "rel_dev": rel,
        }));
    }
    let results = json!({ "fits": rows, "tolerance": tol });
    Ok(Outcome {
        results,
        pass,
        artifacts: vec![("exponent_fits.csv".into(), csv)],
        spec_hashes: vec![],
    })
}

// ---------------------------------------------------------------------------
// multiscale
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiscaleParams {
    #[serde(default = "two")]
    gamma: f64,
    #[serde(default = "four_usize")]
    order: usize,
    #[serde(default = "minus_eight")]
    l: i32,
    #[serde(default = "five_i32")]
    n: i32,
    #[serde(default = "one")]
    c: f64,
}

fn two() -> f64 {
    2.0
}
fn four_usize() -> usize {
    4
}
fn minus_eight() -> i32 {
    -8
}
fn five_i32() -> i32 {
    5
}

fn cmd_multiscale(params: Value, tol_scale: f64) -> CliResult<Outcome> {
    let p: MultiscaleParams = parse_params(params)?;
    let fam = CutoffFamily::new(p.gamma, p.order, p.l, p.n)?;
    let part = partition_check(&fam, 2001);
    let (tau_plus, tau_minus) = anomaly_tau(&fam, p.c, 1)?;
    let tau_target = 1.0 / (4.0 * std::f64::consts::PI * p.c);
    let tad = tadpole_check(p.l.max(-3), p.n.min(4).max(p.l.max(-3) + 1), &fam, p.c, 1, 0.0)?;
    let mut csv = String::from("scale,sup_norm,l1_norm\n");
    let mut js = Vec::new();
    let mut sups = Vec::new();
    let mut l1s = Vec::new();
    for j in -4..=4 {
        let norms = propagator_norms(j, 1, p.c, 1.0, &fam, 30.0)?;
        csv.push_str(&format!("{j},{:.6e},{:.6e}\n", norms.sup, norms.l1));
        js.push(j as f64 * fam.gamma.ln());
        sups.push(norms.sup.ln());
        l1s.push(norms.l1.ln());
    }
    let (slope_sup, _, _) = luttlab::numerics::linear_fit(&js, &sups);
    let (slope_l1, _, _) = luttlab::numerics::linear_fit(&js, &l1s);
    let pass = part <= 1e-12 * tol_scale
        && (tau_minus - tau_target).abs() <= 1e-6 * tol_scale
        && tau_plus <= 1e-6 * tol_scale
        && tad <= 1e-8 * tol_scale
        && (slope_sup - 1.0).abs() <= 0.02 * tol_scale
        && (slope_l1 + 1.0).abs() <= 0.02 * tol_scale;
    let results = json!({
        "partition_defect": part,
        "tau_plus": tau_plus,
        "tau_minus": tau_minus,
        "tau_minus_target": tau_target,
        "tadpole": tad,
        "sup_norm_slope": slope_sup,
        "l1_norm_slope": slope_l1,
    });
    Ok(Outcome {
        results,
        pass,
        artifacts: vec![("propagator_norms.csv".into(), csv)],
        spec_hashes: vec![],
    })
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialCouplings {
    #[serde(default)]
    g1: f64,
    #[serde(default)]
    g2: f64,
    #[serde(default)]
    g4: f64,
    #[serde(default)]
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
enum BetaParams {
    Zero,
    Synthetic { c: f64, theta: f64 },
    OneLoop { a: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowParams {
    initial: InitialCouplings,
    beta: BetaParams,
    #[serde(default = "minus_two_hundred")]
    h_min: i32,
    #[serde(default = "two")]
    gamma: f64,
    #[serde(default = "one")]
    eps_bar: f64,
}

fn minus_two_hundred() -> i32 {
    -200
}

fn cmd_flow(params: Value) -> CliResult<Outcome> {
    let p: FlowParams = parse_params(params)?;
    let v0 = RccVector {
        g1: p.initial.g1,
        g2: p.initial.g2,
        g4: p.initial.g4,
        delta: p.initial.delta,
    };
    let beta = match p.beta {
        BetaParams::Zero => BetaFunction::Zero,
        BetaParams::Synthetic { c, theta } => BetaFunction::SyntheticDecay { c, theta },
        BetaParams::OneLoop { a } => BetaFunction::OneLoopG1 { a },
    };
    let trace = run_flow(&v0, &beta, p.h_min, p.gamma, p.eps_bar, &ZModel::default())?;
    let zrep = z_flow(&trace, 1.0);
    let mut pass = trace.domain_exit.is_none();
    let mut results = json!({
        "scales": trace.steps.len(),
        "final": trace.last().v,
        "domain_exit": trace.domain_exit,
        "eta_hat": zrep.eta_hat,
    });
    if let BetaFunction::OneLoopG1 { a } = beta {
        if v0.g1 > 0.0 {
            let bound = g1_bound_check(&trace, a, v0.g1)?;
            pass = pass && bound.holds;
            results["g1_bound"] = serde_json::to_value(&bound).unwrap();
        }
    }
    Ok(Outcome {
        results,
        pass,
        artifacts: vec![("flow_trace.csv".into(), trace.to_csv())],
        spec_hashes: vec![],
    })
}

// ---------------------------------------------------------------------------
// verify-all
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    #[serde(default = "desk")]
    preset: String,
}

fn desk() -> String {
    "desk".into()
}

fn cmd_verify_all(params: Value, threads: Option<usize>) -> CliResult<Outcome> {
    let p: VerifyParams = parse_params(params)?;
    let ids: Vec<usize> = match p.preset.as_str() {
        "desk" => (1..=verify::CRITERION_COUNT).collect(),
        // Quick preset: the algebra, quadrature, and flow checks (no
        // many-body spectra).
        "quick" => vec![3, 4, 5, 6, 7, 10],
        other => return Err(CliError::Schema(format!("unknown preset {other:?}"))),
    };
    let workers = threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .clamp(1, ids.len());
    let mut reports: Vec<Option<verify::CriterionReport>> = (0..ids.len()).map(|_| None).collect();
    if workers <= 1 {
        for (slot, &id) in ids.iter().enumerate() {
            reports[slot] = Some(verify::run_criterion(id));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<verify::CriterionReport>>> =
            (0..ids.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= ids.len() {
                        break;
                    }
                    let rep = verify::run_criterion(ids[i]);
                    *slots[i].lock().unwrap() = Some(rep);
                });
            }
        });
        for (slot, cell) in slots.into_iter().enumerate() {
            reports[slot] = cell.into_inner().unwrap();
        }
    }
    let reports: Vec<verify::CriterionReport> = reports.into_iter().flatten().collect();
    let pass = reports.iter().all(|r| r.pass);
    let mut csv = String::from("id,name,pass,seconds,details\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{:.2},\"{}\"\n",
            r.id,
            r.name,
            r.pass,
            r.seconds,
            r.details.replace('"', "'")
        ));
    }
    let results = json!({
        "preset": p.preset,
        "criteria": reports,
        "passed": reports.iter().filter(|r| r.pass).count(),
        "total": reports.len(),
    });
    Ok(Outcome {
        results,
        pass,
        artifacts: vec![("criteria.csv".into(), csv)],
        spec_hashes: vec![],
    })
}
