//! Command-line front end: simulation runs in every representation,
//! verification suites, and drift/Casimir reporting.

mod config;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use config::{BuildError, Mode, RunConfig};
use ksnbody::algebra::{casimirs, extract_invariants, j_block, GramPair, InvariantBasis};
use ksnbody::dynamics::{
    bilinears, canonical_flow, heggie_hamiltonian, invariant_hamiltonian, reduced_flow, sum_ks_pos,
    total_angular_momentum, RegState,
};
use ksnbody::kepler::{kepler_flow, orbit_with_eccentricity, KeplerParams};
use ksnbody::verify::{run_suite, SuiteConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use output::{write_summary, write_trajectory, Drift, Row, SummaryInputs};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "ksnbody",
    about = "Regularised few-body dynamics: canonical, Lax and structure-tensor representations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Canonical,
    Lax,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Canonical => Mode::Canonical,
            ModeArg::Lax => Mode::Lax,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a three-body configuration and write trajectory.csv plus
    /// summary.json into the output directory.
    Simulate {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the mode given in the config.
        #[arg(long)]
        mode: Option<ModeArg>,
    },
    /// Run a named property suite and print a JSON report.
    Verify {
        /// One of: ks, kepler, algebra, iso, dynamics.
        #[arg(long)]
        suite: String,
        /// Number of difference vectors for algebra/iso (1, 3 or 6).
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Replace every per-property tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Integrate a two-body orbit of given eccentricity and write
    /// s, t, X1..X4, det L columns.
    Kepler {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        mass_product: f64,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long)]
        ecc: f64,
        /// Number of physical revolutions to cover.
        #[arg(long)]
        periods: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, out, mode } => cmd_simulate(&config, &out, mode),
        Command::Verify {
            suite,
            m,
            trials,
            seed,
            tol,
        } => cmd_verify(&suite, m, trials, seed, tol),
        Command::Kepler {
            mu,
            mass_product,
            h,
            ecc,
            periods,
            out,
        } => cmd_kepler(mu, mass_product, h, ecc, periods, &out),
    };
    std::process::exit(code);
}

fn complex_j() -> DMatrix<Complex64> {
    let j = j_block(3);
    DMatrix::from_fn(6, 6, |r, c| Complex64::new(j[(r, c)], 0.0))
}

fn row_from_gram(s: f64, t: f64, basis: &InvariantBasis, gram: &GramPair) -> Row {
    let raw = (0..basis.len())
        .map(|k| basis.raw_value_from_gram(k, gram))
        .collect();
    let cas = casimirs(&(complex_j() * gram.hermitian()));
    Row {
        s,
        t,
        raw,
        casimirs: cas,
    }
}

fn cmd_simulate(config_path: &Path, out_dir: &Path, mode_flag: Option<ModeArg>) -> i32 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", config_path.display());
            return 2;
        }
    };
    let cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: malformed config: {e}");
            return 2;
        }
    };
    let mode = mode_flag.map_or(cfg.mode, Mode::from);
    let state0 = match cfg.build_state() {
        Ok(s) => s,
        Err(BuildError::Invalid(msg)) => {
            eprintln!("error: invalid config: {msg}");
            return 2;
        }
        Err(BuildError::Collision(msg)) => {
            // The run is over before it starts; flush the empty skeleton.
            eprintln!("error: collision in initial data: {msg}");
            if std::fs::create_dir_all(out_dir).is_ok() {
                let basis = InvariantBasis::new(3);
                let _ = write_trajectory(&out_dir.join("trajectory.csv"), &basis, &[]);
                let _ = write_summary(
                    &out_dir.join("summary.json"),
                    &SummaryInputs {
                        config: serde_json::to_value(&cfg).unwrap_or_default(),
                        mode: mode_name(mode),
                        h_reg: Drift::default(),
                        bilinear: [Drift::default(); 3],
                        angular_momentum: Drift::default(),
                        sum_q: Drift::default(),
                        casimirs: vec![Drift::default(); 6],
                        representation_deviation: None,
                        wall_clock_seconds: 0.0,
                        steps_completed: 0,
                        error: Some(format!("collision in initial data: {msg}")),
                    },
                );
            }
            return 3;
        }
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create output dir {}: {e}", out_dir.display());
        return 2;
    }
    run_simulation(&cfg, state0, mode, out_dir)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Canonical => "canonical",
        Mode::Lax => "lax",
        Mode::Both => "both",
    }
}

fn run_simulation(cfg: &RunConfig, state0: RegState, mode: Mode, out_dir: &Path) -> i32 {
    let started = std::time::Instant::now();
    let basis = InvariantBasis::new(3);
    let jc = complex_j();
    let ds = cfg.integrator.ds;
    let n_steps = (cfg.integrator.s_end / ds).round() as usize;
    let h_guard = 1e-4;
    let casimir_guard = 1e-4;

    let gram0 = extract_invariants(&state0.pairs);
    let cas0 = casimirs(&(&jc * gram0.hermitian()));
    let h0 = heggie_hamiltonian(&state0);
    let c0 = bilinears(&state0.pairs);
    let l0 = total_angular_momentum(&state0.pairs);
    let q0 = sum_ks_pos(&state0.pairs);

    let mut h_reg = Drift {
        initial: h0,
        abs: 0.0,
    };
    let mut bilinear_drift = [
        Drift {
            initial: c0[0],
            abs: 0.0,
        },
        Drift {
            initial: c0[1],
            abs: 0.0,
        },
        Drift {
            initial: c0[2],
            abs: 0.0,
        },
    ];
    let mut am_drift = Drift {
        initial: l0.norm(),
        abs: 0.0,
    };
    let mut sum_q_drift = Drift {
        initial: q0.norm(),
        abs: 0.0,
    };
    let mut casimir_drift: Vec<Drift> = cas0
        .iter()
        .map(|e| Drift {
            initial: e.norm(),
            abs: 0.0,
        })
        .collect();
    let mut deviation: Option<f64> = if mode == Mode::Both { Some(0.0) } else { None };

    let run_canonical = mode != Mode::Lax;
    let run_lax = mode != Mode::Canonical;
    let mut canonical_state = state0;
    let mut canonical_t = 0.0f64;
    let mut lax_m = gram0.hermitian();
    let mut lax_t = 0.0f64;

    let mut rows: Vec<Row> = Vec::with_capacity(n_steps + 1);
    rows.push(row_from_gram(0.0, 0.0, &basis, &gram0));

    let mut error: Option<String> = None;
    let mut steps_completed = 0usize;
    for step in 1..=n_steps {
        let s = step as f64 * ds;
        let mut canonical_gram = None;
        if run_canonical {
            let flow = canonical_flow(&canonical_state, ds, ds, f64::INFINITY)
                .expect("single fixed step cannot fail with an infinite guard");
            let sample = flow.samples.last().expect("one step");
            canonical_state = sample.state;
            canonical_t += sample.t;
            canonical_gram = Some(extract_invariants(&canonical_state.pairs));

            let h = heggie_hamiltonian(&canonical_state);
            h_reg.update(h);
            let c = bilinears(&canonical_state.pairs);
            for i in 0..3 {
                bilinear_drift[i].update(c[i]);
            }
            am_drift.abs = am_drift
                .abs
                .max((total_angular_momentum(&canonical_state.pairs) - l0).norm());
            sum_q_drift.abs = sum_q_drift
                .abs
                .max((sum_ks_pos(&canonical_state.pairs) - q0).norm());
            if (h - h0).abs() > h_guard {
                error = Some(format!(
                    "H_reg drift {:.3e} exceeds guard {h_guard:.1e} at s = {s:.6e}",
                    (h - h0).abs()
                ));
            }
        }
        let mut lax_gram = None;
        if run_lax && error.is_none() {
            let traj = reduced_flow(&lax_m, &canonical_state.params, ds, ds, f64::INFINITY)
                .expect("single fixed step cannot fail with an infinite guard");
            let sample = traj.last().expect("one step");
            lax_m = sample.m.clone();
            lax_t += sample.t;
            let gram = GramPair::from_hermitian(3, &lax_m);
            if !run_canonical {
                h_reg.update(invariant_hamiltonian(&gram, &canonical_state.params));
                for (i, drift) in bilinear_drift.iter_mut().enumerate() {
                    drift.update(gram.omega[(i, 3 + i)]);
                }
            }
            let cas = casimirs(&(&jc * &lax_m));
            for (k, e) in cas.iter().enumerate() {
                casimir_drift[k].abs = casimir_drift[k].abs.max((e - cas0[k]).norm());
                if casimir_drift[k].abs / casimir_drift[k].initial.max(1.0) > casimir_guard {
                    error = Some(format!(
                        "casimir {} drift {:.3e} exceeds guard {casimir_guard:.1e} at s = {s:.6e}",
                        k + 1,
                        casimir_drift[k].abs
                    ));
                }
            }
            lax_gram = Some(gram);
        }
        if error.is_some() {
            break;
        }

        // Casimir drift for canonical-only runs comes from the pushed-forward
        // invariants.
        if let (Some(gram), false) = (&canonical_gram, run_lax) {
            let cas = casimirs(&(&jc * gram.hermitian()));
            for (k, e) in cas.iter().enumerate() {
                casimir_drift[k].abs = casimir_drift[k].abs.max((e - cas0[k]).norm());
            }
        }

        if let (Some(cg), Some(lg)) = (&canonical_gram, &lax_gram) {
            let mut worst = deviation.unwrap_or(0.0);
            for k in 0..basis.len() {
                worst = worst.max(
                    (basis.raw_value_from_gram(k, cg) - basis.raw_value_from_gram(k, lg)).abs(),
                );
            }
            deviation = Some(worst);
        }

        let row = match (&canonical_gram, &lax_gram) {
            (Some(gram), _) => row_from_gram(s, canonical_t, &basis, gram),
            (None, Some(gram)) => row_from_gram(s, lax_t, &basis, gram),
            (None, None) => unreachable!("at least one representation runs"),
        };
        rows.push(row);
        steps_completed = step;
    }

    if write_trajectory(&out_dir.join("trajectory.csv"), &basis, &rows).is_err() {
        eprintln!("error: cannot write trajectory.csv");
        return 2;
    }
    let summary = SummaryInputs {
        config: serde_json::to_value(cfg).unwrap_or_default(),
        mode: mode_name(mode),
        h_reg,
        bilinear: bilinear_drift,
        angular_momentum: am_drift,
        sum_q: sum_q_drift,
        casimirs: casimir_drift,
        representation_deviation: deviation,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        steps_completed,
        error: error.clone(),
    };
    if write_summary(&out_dir.join("summary.json"), &summary).is_err() {
        eprintln!("error: cannot write summary.json");
        return 2;
    }
    match error {
        Some(msg) => {
            eprintln!("error: step failure: {msg} (partial output flushed)");
            3
        }
        None => 0,
    }
}

fn cmd_verify(suite: &str, m: usize, trials: usize, seed: u64, tol: Option<f64>) -> i32 {
    let cfg = SuiteConfig {
        m,
        trials,
        seed,
        tol_override: tol,
    };
    let report = match run_suite(suite, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let value = serde_json::json!({
        "suite": report.suite,
        "m": report.m,
        "trials": report.trials,
        "seed": report.seed,
        "tol_override": tol,
        "pass": report.all_pass(),
        "worst_residual": report.worst_residual(),
        "properties": report.checks.iter().map(|c| serde_json::json!({
            "name": c.name,
            "pass": c.pass,
            "worst_residual": c.residual,
            "tolerance": c.tolerance,
            "negative_control": c.negative_control,
        })).collect::<Vec<_>>(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("serialisable")
    );
    if report.all_pass() {
        0
    } else {
        1
    }
}

fn cmd_kepler(mu: f64, mass_product: f64, h: f64, ecc: f64, periods: usize, out_dir: &Path) -> i32 {
    if !(mu > 0.0 && mass_product > 0.0) {
        eprintln!("error: mu and mass-product must be positive");
        return 2;
    }
    if !(0.0..=1.0).contains(&ecc) {
        eprintln!("error: eccentricity must lie in [0, 1], got {ecc}");
        return 2;
    }
    if h >= 0.0 && periods > 0 {
        eprintln!("error: periodic runs need h < 0, got h = {h}");
        return 2;
    }
    let params = KeplerParams::new(mu, mass_product, h);
    let state = match orbit_with_eccentricity(&params, ecc) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    // One period of the radial oscillation in fictitious time is half the
    // oscillator period and covers one physical revolution.
    let omega = params.fictitious_frequency();
    let revolution = std::f64::consts::PI / omega;
    let s_end = periods.max(1) as f64 * revolution;
    let ds = 1e-4 * revolution;
    let samples = match kepler_flow(&state, &params, s_end, ds) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    if std::fs::create_dir_all(out_dir).is_err() {
        eprintln!("error: cannot create output dir {}", out_dir.display());
        return 2;
    }
    let path = out_dir.join("trajectory.csv");
    let Ok(file) = std::fs::File::create(&path) else {
        eprintln!("error: cannot write {}", path.display());
        return 2;
    };
    use std::io::Write;
    let mut outp = std::io::BufWriter::new(file);
    let _ = writeln!(outp, "s,t,x1,x2,x3,x4,det_l");
    for s in &samples {
        let _ = writeln!(
            outp,
            "{},{},{},{},{},{},{}",
            output::fmt(s.s),
            output::fmt(s.t),
            output::fmt(s.x.x1),
            output::fmt(s.x.x2),
            output::fmt(s.x.x3),
            output::fmt(s.x.x4),
            output::fmt(s.lax.determinant()),
        );
    }
    let _ = outp.flush();
    0
}
