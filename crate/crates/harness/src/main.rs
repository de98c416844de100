use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use riskgrad::config::{Axis, RunConfig};
use riskgrad::{stamp::Stamp, sweep, train, verify, HarnessError};

#[derive(Parser)]
#[command(name = "riskgrad", version, about = "Risk-constrained policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// verify: instance seed. train: train only this seed. sweep/attack: only policies of this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key.path=value`, applied after the config file; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run the exact tabular verification suites.
    Verify,
    /// Train every configured seed.
    Train,
    /// Evaluate trained policies across the configured sweep axis.
    Sweep,
    /// FGSM observation-attack sweep over epsilon.
    Attack,
}

fn load(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Verify => overrides.push(format!("verify.seed={seed}")),
            Command::Train => overrides.push(format!("seeds=[{seed}]")),
            Command::Sweep | Command::Attack => {}
        }
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out={}", toml::Value::String(out.display().to_string())));
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if cli.command == Command::Attack && cfg.sweep.axis != Axis::Epsilon {
        cfg.sweep.axis = Axis::Epsilon;
        cfg.sweep.grid = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<bool> {
    let out = &cfg.out;
    match cli.command {
        Command::Verify => {
            let outcome = verify::run_verify(&cfg.verify)?;
            verify::write_outcome(out, &outcome)?;
            std::fs::write(out.join("config.resolved.toml"), cfg.resolved_toml()?)
                .with_context(|| format!("writing config into {}", out.display()))?;
            std::fs::write(out.join("stamp.json"), Stamp::current().to_json())
                .with_context(|| format!("writing stamp into {}", out.display()))?;
            for s in &outcome.report.suites {
                println!(
                    "{:<12} {} checks={} failures={} flagged={} max_residual={} min_slack={}",
                    s.suite.name(),
                    if s.pass { "PASS" } else { "FAIL" },
                    s.checks,
                    s.failures,
                    s.flagged,
                    s.max_residual.map_or("-".into(), |x| format!("{x:.3e}")),
                    s.min_slack.map_or("-".into(), |x| format!("{x:.3e}")),
                );
            }
            println!("overall {}", if outcome.report.pass { "PASS" } else { "FAIL" });
            Ok(outcome.report.pass)
        }
        Command::Train => {
            let outcome = train::run_train(cfg, out)?;
            for r in &outcome.summary {
                println!(
                    "{:<8} mean_return={:.2} worst10={:.2} eval_mean={:.2} best_eval={:.2}",
                    r.label, r.mean_return, r.worst10_return, r.eval_mean, r.best_eval_mean
                );
            }
            Ok(true)
        }
        Command::Sweep | Command::Attack => {
            let name = if cli.command == Command::Attack { "attack" } else { "sweep" };
            let mut cfg = cfg.clone();
            let rows = match cli.seed {
                None => sweep::run_configured(&cfg, out, name)?,
                Some(seed) => {
                    let env = cfg.env.spec()?;
                    let mut policies = Vec::new();
                    for set in &cfg.sweep.policies {
                        policies.extend(
                            sweep::load_policy_set(set, &env)?
                                .into_iter()
                                .filter(|p| p.state.seed == seed),
                        );
                    }
                    anyhow::ensure!(!policies.is_empty(), "no policy with seed {seed}");
                    cfg.seeds = vec![seed];
                    let rows = sweep::run_sweep(&policies, &env, &cfg.sweep, cfg.train.gamma)?;
                    riskgrad::csvio::write(&out.join(format!("{name}.csv")), &rows)?;
                    let title = format!("{} sweep on {}", cfg.sweep.axis.name(), env.kind.name());
                    std::fs::create_dir_all(out)?;
                    std::fs::write(out.join(format!("{name}.svg")), riskgrad::plot::sweep_svg(&rows, &title))?;
                    std::fs::write(out.join("config.resolved.toml"), cfg.resolved_toml()?)?;
                    std::fs::write(out.join("stamp.json"), Stamp::current().to_json())?;
                    rows
                }
            };
            for r in &rows {
                println!(
                    "{:<8} {}={:<6} seed={} mean={:.2} std={:.2} worst10={:.2}",
                    r.label, r.axis, r.point, r.seed, r.mean, r.std, r.worst10
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
