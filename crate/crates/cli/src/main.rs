//! `efelab`: identity verification, policy planning and closed-loop
//! simulation over discrete generative models.
//!
//! Exit codes: 0 success, 1 a check failed or a runtime error, 2 bad usage
//! or configuration (including unreadable or invalid model files).

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use efelab::envs::{sample_initial_state, write_fixtures, Environment};
use efelab::functionals::{format_real, Functional};
use efelab::inference::{bayes_posterior, belief_predict};
use efelab::model::{load_model, ModelFile, PreferenceModel};
use efelab::oracle::{identity_suite, SuiteConfig, Tolerances};
use efelab::planning::{evaluate_policy_with_override, plan, select_policy, selection_rng, PlanConfig};
use efelab::probability::Categorical;
use efelab::Error;

#[derive(Parser, Debug)]
#[command(name = "efelab", version, about = "Exact free-energy functionals for discrete POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the identity suite on seeded random models.
    Verify(VerifyArgs),
    /// Evaluate every policy of a model and print the policy posterior.
    Plan(PlanArgs),
    /// Plan, act, observe and update beliefs in a closed loop.
    Simulate(SimulateArgs),
    /// Write the shipped environment fixtures into a directory.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Args, Debug)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// First seed; seeds run from here upward.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model dimensions as SxOxA.
    #[arg(long, default_value = "3x3x3", value_parser = parse_dims)]
    dims: (usize, usize, usize),
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    /// Override mixture; checks run at 0 and this value. Without it the
    /// suite uses 0, 0.25 and 0.5.
    #[arg(long)]
    eta: Option<f64>,
    /// Identity tolerance. One-sided bounds use min(this, 1e-12) as slack.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "efe")]
    functional: Functional,
    /// Planning horizon; defaults to the model's.
    #[arg(long)]
    horizon: Option<usize>,
    /// Policy precision.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Mix every predicted Q(x | o) toward uniform at this rate.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of closed-loop steps; defaults to the model horizon.
    #[arg(long)]
    steps: Option<usize>,
    /// Sample the policy from the posterior instead of taking the mode.
    #[arg(long)]
    sample: bool,
    #[command(flatten)]
    output: Output,
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let bad = || format!("expected SxOxA with positive integers, got `{s}`");
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if n.contains(&0) {
        return Err(bad());
    }
    Ok((n[0], n[1], n[2]))
}

/// What went wrong and which exit code it maps to.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

fn failure(e: Error) -> CliError {
    CliError::Failure(e.to_string())
}

fn emit(output: &Output, text: &str) -> Result<(), CliError> {
    match &output.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    if !(args.tolerance >= 0.0) {
        return Err(CliError::Usage("--tolerance must be non-negative".into()));
    }
    if args.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let etas = match args.eta {
        Some(e) if !(0.0..=1.0).contains(&e) => {
            return Err(CliError::Usage("--eta must lie in [0, 1]".into()))
        }
        Some(e) if e > 0.0 => vec![0.0, e],
        Some(_) => vec![0.0],
        None => vec![0.0, 0.25, 0.5],
    };
    let (s, o, a) = args.dims;
    let cfg = SuiteConfig {
        num_seeds: args.seeds,
        first_seed: args.seed,
        num_states: s,
        num_obs: o,
        num_actions: a,
        horizon: args.horizon,
        etas,
        tolerances: Tolerances {
            identity: args.tolerance,
            bound_slack: args.tolerance.min(1e-12),
        },
    };
    let report = identity_suite(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = match args.output.format {
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(&args.output, &text)?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failure(format!(
            "identity suite: {} failures",
            report.failures.len()
        )))
    }
}

struct Loaded {
    file: ModelFile,
    pref: PreferenceModel,
    cfg: PlanConfig,
}

fn load(args: &ModelArgs) -> Result<Loaded, CliError> {
    let file = load_model(&args.model)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.model.display())))?;
    let pref = file.preferences.clone().ok_or_else(|| {
        CliError::Usage(format!("{}: model has no [preferences] table", args.model.display()))
    })?;
    if !(args.gamma > 0.0 && args.gamma.is_finite()) {
        return Err(CliError::Usage("--gamma must be positive".into()));
    }
    if !(0.0..=1.0).contains(&args.eta) {
        return Err(CliError::Usage("--eta must lie in [0, 1]".into()));
    }
    let horizon = args.horizon.unwrap_or(file.model.horizon());
    if horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let cfg = PlanConfig {
        functional: args.functional,
        horizon,
        precision: args.gamma,
        eta: args.eta,
    };
    Ok(Loaded { file, pref, cfg })
}

fn action_name(file: &ModelFile, a: usize) -> String {
    file.labels
        .as_ref()
        .and_then(|l| l.actions.get(a).cloned())
        .unwrap_or_else(|| a.to_string())
}

fn plan_cmd(args: &PlanArgs) -> Result<(), CliError> {
    let Loaded { file, pref, cfg } = load(&args.model)?;
    let m = &file.model;
    let p = plan(&cfg, m.initial_prior(), m, &pref).map_err(failure)?;

    let mut out = String::new();
    match args.output.format {
        Format::Csv => {
            // Term columns follow the first evaluation; every policy of one
            // functional reports the same keys.
            let keys: Vec<String> = p.evaluations[0].per_step[0]
                .flat()
                .into_iter()
                .map(|(k, _)| k)
                .collect();
            let mut header = vec!["policy".to_string(), "actions".to_string()];
            for t in 1..=cfg.horizon {
                header.extend(keys.iter().map(|k| format!("step{t}.{k}")));
            }
            header.push("total".into());
            header.push("probability".into());
            out.push_str(&header.join(","));
            out.push('\n');
            for (e, prob) in p.evaluations.iter().zip(p.posterior.probs()) {
                let mut row = vec![
                    e.policy.label(),
                    e.policy
                        .actions
                        .iter()
                        .map(|&a| action_name(&file, a))
                        .collect::<Vec<_>>()
                        .join("-"),
                ];
                for r in &e.per_step {
                    row.extend(r.flat().into_iter().map(|(_, v)| format_real(v)));
                }
                row.push(format_real(e.total));
                row.push(format_real(*prob));
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        Format::Text => {
            out.push_str(&format!(
                "functional={}\nhorizon={}\ngamma={}\neta={}\npolicies={}\n",
                cfg.functional,
                cfg.horizon,
                format_real(cfg.precision),
                format_real(cfg.eta),
                p.evaluations.len()
            ));
            for (e, prob) in p.evaluations.iter().zip(p.posterior.probs()) {
                out.push_str(&format!("\n[policy {}]\n", e.policy.label()));
                out.push_str(&format!("total={}\n", format_real(e.total)));
                out.push_str(&format!("probability={}\n", format_real(*prob)));
                for (t, r) in e.per_step.iter().enumerate() {
                    for (k, v) in r.flat() {
                        out.push_str(&format!("step{}.{k}={}\n", t + 1, format_real(v)));
                    }
                }
            }
        }
    }
    emit(&args.output, &out)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let Loaded { file, pref, cfg } = load(&args.model)?;
    let m = &file.model;
    let steps = args.steps.unwrap_or(m.horizon());
    let true_state = match file.true_state {
        Some(s) => s,
        None => sample_initial_state(m.initial_prior(), args.seed),
    };
    let mut env = Environment::new(m.clone(), true_state, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut sampler = args.sample.then(|| selection_rng(args.seed));
    let mut belief: Categorical = m.initial_prior().clone();

    let s = m.num_states();
    let mut header = vec!["time", "action", "observation", "true_state"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((0..s).map(|x| format!("belief_{x}")));
    header.push("policy".into());
    header.extend(Functional::ALL.iter().map(|f| f.name().to_string()));
    let mut rows = Vec::new();

    for t in 0..steps {
        let at = |e: Error| CliError::Failure(format!("step {t}: {e}"));
        let p = plan(&cfg, &belief, m, &pref).map_err(at)?;
        let policies = p.policies();
        let chosen = select_policy(&p.posterior, sampler.as_mut());
        let policy = &policies[chosen];
        let action = policy.actions[0];
        let totals = Functional::ALL
            .iter()
            .map(|&f| {
                evaluate_policy_with_override(policy, f, &belief, m, &pref, cfg.eta)
                    .map(|e| e.total)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(at)?;

        let obs = env.step(action).map_err(at)?;
        let predicted = belief_predict(&belief, action, m).map_err(at)?;
        belief = bayes_posterior(&predicted, m.likelihood(), obs).map_err(at)?.dist;

        let mut row = vec![
            t.to_string(),
            action.to_string(),
            obs.to_string(),
            env.true_state().to_string(),
        ];
        row.extend(belief.probs().iter().map(|&b| format_real(b)));
        row.push(policy.label());
        row.extend(totals.iter().map(|&v| format_real(v)));
        rows.push(row);
    }

    let out = match args.output.format {
        Format::Csv => {
            let mut out = header.join(",") + "\n";
            for r in &rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        Format::Text => {
            let mut out = String::new();
            for (i, r) in rows.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                for (k, v) in header.iter().zip(r) {
                    out.push_str(&format!("{k}={v}\n"));
                }
            }
            out
        }
    };
    emit(&args.output, &out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify(a) => verify(&a),
        Command::Plan(a) => plan_cmd(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Fixtures { out } => {
            let paths = write_fixtures(&out).map_err(|e| CliError::Usage(e.to_string()))?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("efelab: {e}");
            ExitCode::from(e.code())
        }
    }
}
