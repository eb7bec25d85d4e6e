use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{resolve_seed, Config, TheoryFixture};
use super::manifest::{list_outputs, RunManifest};
use super::{CliError, Command};
use crate::bench::{self, fit_power_law, FitResult, SweepConfig};
use crate::descent::{self, DescentConfig, PolicyKind, SelectorPolicy};
use crate::io::{self, MatrixFormat};
use crate::objective::Objective;
use crate::reservoir::{EntryDistribution, StateMatrix};
use crate::tasks::TaskData;
use crate::theory::{self, ContractionInputs, SmallInstance, MAX_KAPPA_N};

pub(super) fn dispatch(cmd: Command) -> Result<(), CliError> {
    let started = Instant::now();
    let (name, common) = match &cmd {
        Command::Train { common, .. } => ("train", common),
        Command::Sweep { common, .. } => ("sweep", common),
        Command::Theory { common, .. } => ("theory", common),
        Command::GenTask { common, .. } => ("gen-task", common),
    };
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = resolve_seed(common.seed, config.seed)?;
    config.seed = Some(seed);
    if common.threads.is_some() {
        config.threads = common.threads;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("boolcd-{name}")));

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        match cmd {
            Command::Train {
                policy,
                n,
                epochs,
                minimizers,
                epsilon,
                task,
                ..
            } => {
                let t = &mut config.train;
                set(&mut t.policy, policy);
                set(&mut t.max_epochs, epochs);
                set(&mut t.minimizers, minimizers);
                set(&mut t.epsilon, epsilon);
                set(&mut config.reservoir.n_nodes, n);
                train(&config, seed, &out, task.as_deref())
            }
            Command::Sweep {
                sizes,
                policies,
                minimizers,
                ..
            } => {
                let s = &mut config.sweep;
                set(&mut s.sizes, sizes);
                set(&mut s.policies, policies);
                set(&mut s.minimizers_per_size, minimizers);
                sweep(&config, seed, &out)
            }
            Command::Theory { n, t, instances, .. } => {
                let th = &mut config.theory;
                set(&mut th.n, n);
                set(&mut th.t, t);
                set(&mut th.instances, instances);
                theory_cmd(&config, seed, &out)
            }
            Command::GenTask {
                n,
                t_train,
                t_test,
                format,
                ..
            } => {
                set(&mut config.reservoir.n_nodes, n);
                set(&mut config.task.t_train, t_train);
                set(&mut config.task.t_test, t_test);
                set(&mut config.gen_task.format, format);
                gen_task(&config, seed, &out)
            }
        }
    })?;

    RunManifest {
        command: name.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config,
        outputs: list_outputs(&out)?,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    }
    .write(&out)?;
    Ok(())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn config_err(e: crate::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(crate::Error::from)?;
    fs::write(path, text + "\n").map_err(crate::Error::from)?;
    Ok(())
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| crate::Error::from(e).into())
}

#[derive(Serialize)]
struct MinimizerSummary {
    seed: u64,
    #[serde(rename = "K")]
    k: usize,
    total_epochs: usize,
    accepted_flips: usize,
    final_train_error: f64,
    final_test_error: Option<f64>,
    converged_reason: &'static str,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    #[serde(flatten)]
    ensemble: &'a descent::EnsembleSummary,
    policy: PolicyKind,
    n_nodes: usize,
    initial_error: f64,
    minimizers: Vec<MinimizerSummary>,
}

fn train(config: &Config, seed: u64, out: &Path, task_dir: Option<&Path>) -> Result<(), CliError> {
    let tc = &config.train;
    if tc.minimizers == 0 || tc.max_epochs == 0 {
        return Err(CliError::Config("minimizers and max_epochs must be >= 1".into()));
    }
    let (task, n): (TaskData, usize) = match task_dir {
        Some(dir) => {
            let t = io::read_task(dir).map_err(config_err)?;
            let n = t.n_nodes();
            (t, n)
        }
        None => {
            let n = config.reservoir.n_nodes;
            config.reservoir.to_config(0).validate().map_err(config_err)?;
            let t = bench::cell_task(&config.task_config(), n, seed)?;
            (t, n)
        }
    };
    let train_obj = task.train_objective()?;
    let test_obj = if tc.record_test_error {
        task.test_objective(&train_obj)?
    } else {
        None
    };
    let w0 = bench::cell_start(n, seed);
    let seeds = bench::minimizer_seeds(seed, n, tc.policy, tc.minimizers);
    let dcfg = DescentConfig {
        policy: SelectorPolicy {
            kind: tc.policy,
            rng_seed: 0,
        },
        max_epochs: tc.max_epochs,
        target_error: tc.epsilon,
        stop_on_local_min: true,
        record_test_error: test_obj.is_some(),
    };
    dcfg.validate().map_err(config_err)?;
    let ens = descent::run_ensemble_monitored(
        &train_obj,
        test_obj.as_ref(),
        &w0,
        &dcfg,
        tc.minimizers,
        &seeds,
    )?;

    create_dir(out)?;
    for (i, trace) in ens.traces.iter().enumerate() {
        let f = fs::File::create(out.join(format!("trace_{i:03}.csv"))).map_err(crate::Error::from)?;
        let mut w = BufWriter::new(f);
        io::write_trace_csv(&mut w, trace)?;
        w.flush().map_err(crate::Error::from)?;
    }
    let minimizers = ens
        .traces
        .iter()
        .zip(&seeds)
        .map(|(t, &s)| MinimizerSummary {
            seed: s,
            k: t.epochs_to_converge,
            total_epochs: t.total_epochs,
            accepted_flips: t.accepted_flips,
            final_train_error: t.final_error(),
            final_test_error: t.final_test_error(),
            converged_reason: t.converged_reason.as_str(),
        })
        .collect();
    let summary = TrainSummary {
        ensemble: &ens.summary,
        policy: tc.policy,
        n_nodes: n,
        initial_error: ens.summary.mean_error[0],
        minimizers,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let finals: Vec<f64> = ens.traces.iter().map(|t| t.final_error()).collect();
    let (fm, fs) = descent::mean_std(&finals);
    println!(
        "K_mean {} K_std {} final_error_mean {} final_error_std {}",
        ens.summary.k_mean, ens.summary.k_std, fm, fs
    );
    Ok(())
}

fn print_exponent(policy: PolicyKind, fit: &FitResult) {
    println!(
        "scaling_exponent {policy} {:.2} {:.4}",
        fit.exponent().unwrap_or(f64::NAN),
        fit.r_squared
    );
}

fn sweep(config: &Config, seed: u64, out: &Path) -> Result<(), CliError> {
    let sc = &config.sweep;
    if let Some(fx) = &sc.fixture {
        create_dir(out)?;
        let mut fits = std::collections::BTreeMap::new();
        for (policy, ks) in [
            (PolicyKind::Greedy, &fx.greedy),
            (PolicyKind::Markovian, &fx.markovian),
        ] {
            if ks.is_empty() {
                continue;
            }
            let fit = fit_power_law(&fx.sizes, ks).map_err(config_err)?;
            print_exponent(policy, &fit);
            fits.insert(policy.to_string(), fit);
        }
        write_json(&out.join("fits.json"), &serde_json::json!({ "scaling": fits }))?;
        return Ok(());
    }
    let cfg = SweepConfig {
        sizes: sc.sizes.clone(),
        minimizers_per_size: sc.minimizers_per_size,
        policies: sc.policies.clone(),
        task: config.task_config(),
        epsilon: sc.epsilon,
        max_epochs: sc.max_epochs,
        seed_base: seed,
    };
    cfg.validate().map_err(config_err)?;
    cfg.task.reservoir.validate().map_err(config_err)?;
    let report = bench::run_sweep(&cfg)?;
    for f in &report.failures {
        eprintln!("boolcd: cell N={} {} failed: {}", f.size, f.policy, f.error);
    }
    if report.cells.is_empty() {
        return Err(crate::Error::InvalidParameter("every sweep cell failed".into()).into());
    }
    bench::write_sweep(out, &report)?;
    if cfg.sizes.len() < 3 {
        eprintln!("boolcd: fewer than 3 sizes, no scaling fit");
    }
    for policy in &cfg.policies {
        if let Some(fit) = report.scaling.get(policy) {
            print_exponent(*policy, fit);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct InstanceReport {
    index: usize,
    seed: Option<u64>,
    lambda: f64,
    eta: f64,
    kappa: f64,
    kappa_variant: f64,
    kappa_degenerate: bool,
    rho: f64,
    rho_vacuous: bool,
    rho_variant: f64,
    worst_ratio: Option<f64>,
    fraction_satisfied: f64,
    steps_checked: usize,
    violations: usize,
    local_minimizers: usize,
    inequality_checks: theory::InequalityChecks,
}

#[derive(Serialize)]
struct TheoryReport {
    n: usize,
    t: usize,
    policy: PolicyKind,
    simplex: theory::SimplexMode,
    pi_inf: f64,
    kappa: f64,
    kappa_variant: f64,
    rho: f64,
    rho_vacuous: bool,
    worst_ratio: Option<f64>,
    fraction_satisfied: f64,
    flagged_fraction: f64,
    violations_unflagged: usize,
    beta: Option<f64>,
    beta_ci: Option<(f64, f64)>,
    beta_r_squared: Option<f64>,
    instances: Vec<InstanceReport>,
    notes: Vec<String>,
}

fn fixture_instance(fx: &TheoryFixture) -> Result<SmallInstance, CliError> {
    let state = StateMatrix::from_rows(&fx.state).map_err(config_err)?;
    let obj = match fx.eta {
        Some(eta) => Objective::with_eta(state, fx.target.clone(), eta),
        None => Objective::new(state, fx.target.clone()),
    }
    .map_err(config_err)?;
    SmallInstance::new(obj).map_err(config_err)
}

fn theory_cmd(config: &Config, seed: u64, out: &Path) -> Result<(), CliError> {
    let th = &config.theory;
    let fixture = th.fixture.as_ref().map(fixture_instance).transpose()?;
    let (n, t) = match &fixture {
        Some(inst) => (inst.n(), inst.objective().horizon()),
        None => (th.n, th.t),
    };
    if n > MAX_KAPPA_N {
        return Err(CliError::Config(format!(
            "theory needs N <= {MAX_KAPPA_N} for exhaustive checks, got N = {n}"
        )));
    }
    if n == 0 || t == 0 || th.instances == 0 {
        return Err(CliError::Config("n, t and instances must be >= 1".into()));
    }
    let policy = SelectorPolicy {
        kind: th.policy,
        rng_seed: bench::derive_seed(seed, &[7]),
    };
    let pi_est = theory::pi_inf(policy, n, th.calibration_epochs)?;
    let pi: Vec<f64> = match th.policy {
        PolicyKind::Markovian => vec![1.0 / n as f64; n],
        PolicyKind::Greedy => theory::selection_frequencies(policy, n, th.calibration_epochs)?,
    };
    let count = if fixture.is_some() { 1 } else { th.instances };

    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let inst_seed = bench::derive_seed(seed, &[i as u64, 5]);
        let inst = match &fixture {
            Some(f) => f.clone(),
            None => theory::random_instance(n, t, inst_seed).map_err(config_err)?,
        };
        let obj = inst.objective();
        let k = theory::kappa(&inst, th.simplex)?;
        let inputs = |kappa: f64| ContractionInputs {
            kappa: Some(kappa),
            lambda: k.lambda,
            eta: obj.eta(),
            pi_inf: pi_est.pi_inf,
            n,
        };
        let rho = theory::rho(&inputs(k.kappa))?;
        let rho_variant = theory::rho(&inputs(k.kappa_variant))?;
        let check_seed = bench::derive_seed(seed, &[i as u64, 6]);
        let contraction = theory::verify_contraction(&inst, policy, &pi, rho, th.trials, check_seed)?;
        let inequality_checks = theory::inequality_checks(&inst, &pi, 100, check_seed)?;
        instances.push(InstanceReport {
            index: i,
            seed: fixture.is_none().then_some(inst_seed),
            lambda: k.lambda,
            eta: obj.eta(),
            kappa: k.kappa,
            kappa_variant: k.kappa_variant,
            kappa_degenerate: k.degenerate,
            rho: rho.rho,
            rho_vacuous: rho.vacuous,
            rho_variant: rho_variant.rho,
            worst_ratio: contraction.worst_ratio,
            fraction_satisfied: contraction.fraction_satisfied,
            steps_checked: contraction.steps_checked,
            violations: contraction.violations,
            local_minimizers: theory::local_minimizers(&inst).len(),
            inequality_checks,
        });
    }

    let mut notes = Vec::new();
    let flagged = instances.iter().filter(|r| r.rho_vacuous).count();
    let violations_unflagged = instances
        .iter()
        .filter(|r| !r.rho_vacuous)
        .map(|r| r.violations)
        .sum();
    if flagged > 0 {
        notes.push(format!(
            "{flagged} of {count} instances have rho outside (0, 1); the contraction bound is vacuous there"
        ));
    }
    if instances.iter().any(|r| r.kappa_degenerate) {
        notes.push(
            "kappa = 0 on some instances: a candidate matches the rounded gradient step, so rho = 0"
                .into(),
        );
    }
    if th.policy == PolicyKind::Greedy {
        notes.push(format!(
            "|pi|_inf estimated from {} greedy draws (std error {:.2e})",
            th.calibration_epochs, pi_est.std_error
        ));
    }

    let beta = if th.beta_sizes.is_empty() {
        notes.push("beta not estimated (no sizes configured)".into());
        None
    } else {
        let b = theory::estimate_beta(
            &th.beta_sizes,
            EntryDistribution::Uniform01,
            th.beta_trials,
            bench::derive_seed(seed, &[8]),
            th.beta_centering,
        )
        .map_err(config_err)?;
        notes.push(format!(
            "beta from {:?} centering over N = T in {:?}, {} trials each",
            th.beta_centering, th.beta_sizes, th.beta_trials
        ));
        Some(b)
    };

    let first = &instances[0];
    let report = TheoryReport {
        n,
        t,
        policy: th.policy,
        simplex: th.simplex,
        pi_inf: pi_est.pi_inf,
        kappa: first.kappa,
        kappa_variant: first.kappa_variant,
        rho: first.rho,
        rho_vacuous: first.rho_vacuous,
        worst_ratio: first.worst_ratio,
        fraction_satisfied: first.fraction_satisfied,
        flagged_fraction: flagged as f64 / count as f64,
        violations_unflagged,
        beta: beta.as_ref().map(|b| b.beta),
        beta_ci: beta.as_ref().map(|b| b.ci),
        beta_r_squared: beta.as_ref().map(|b| b.r_squared),
        instances,
        notes,
    };
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    println!(
        "kappa {} rho {} rho_vacuous {} worst_ratio {}",
        report.kappa,
        report.rho,
        report.rho_vacuous,
        report.worst_ratio.map_or("none".into(), |w| w.to_string())
    );
    Ok(())
}

fn gen_task(config: &Config, seed: u64, out: &Path) -> Result<(), CliError> {
    let format = match config.gen_task.format.as_str() {
        "csv" => MatrixFormat::Csv,
        "binary" | "bin" => MatrixFormat::Binary,
        other => return Err(CliError::Config(format!("unknown matrix format `{other}`"))),
    };
    let n = config.reservoir.n_nodes;
    config.reservoir.to_config(0).validate().map_err(config_err)?;
    let task = bench::cell_task(&config.task_config(), n, seed).map_err(|e| match e {
        crate::Error::InvalidParameter(_) => config_err(e),
        e => e.into(),
    })?;
    io::write_task(out, &task, format)?;
    println!("wrote task N={n} T_train={} T_test={} to {}", task.meta.t_train, task.meta.t_test, out.display());
    Ok(())
}
