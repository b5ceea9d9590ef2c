use orderpick::bench::bench as run_bench;
use orderpick::config::{ExperimentConfig, PolicyChoice};
use orderpick::eval::{episode_seed, Aggregate};
use orderpick::heuristics::{FollowMe, PickDontMove};
use orderpick::marl::train::checkpoint_path;
use orderpick::marl::{ActMode, Algorithm, Checkpoint, LearnedController, Trainer};
use orderpick::policy::{Controller, RandomPolicy};
use orderpick::sim::Env;
use serde::Serialize;

use crate::output::{self, EventLog, Manifest};
use crate::{CliError, ExportArgs, RunArgs, TrainArgs};

fn controller(cfg: &ExperimentConfig) -> Result<Box<dyn Controller>, CliError> {
    Ok(match cfg.policy {
        PolicyChoice::Fm => Box::new(FollowMe::new()),
        PolicyChoice::Pdm => Box::new(PickDontMove::new()),
        PolicyChoice::Random => Box::new(RandomPolicy::new(cfg.seed)),
        PolicyChoice::Hsnac | PolicyChoice::Snac => {
            let path = cfg
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::Config("hsnac/snac need --checkpoint".into()))?;
            let ckpt = Checkpoint::load(path)
                .map_err(|e| CliError::Config(format!("cannot load {}: {e}", path.display())))?;
            let want = if cfg.policy == PolicyChoice::Hsnac { Algorithm::Hsnac } else { Algorithm::Snac };
            if ckpt.policy.algorithm != want {
                return Err(CliError::Config(format!(
                    "{} holds a {:?} policy, not {:?}",
                    path.display(),
                    ckpt.policy.algorithm,
                    want
                )));
            }
            Box::new(LearnedController::new(ckpt.policy, ActMode::Greedy))
        }
    })
}

fn policy_name(p: PolicyChoice) -> &'static str {
    match p {
        PolicyChoice::Fm => "fm",
        PolicyChoice::Pdm => "pdm",
        PolicyChoice::Random => "random",
        PolicyChoice::Hsnac => "hsnac",
        PolicyChoice::Snac => "snac",
    }
}

fn print_summary(title: &str, agg: &Aggregate) {
    println!("{title} ({} episodes)", agg.episodes);
    for (name, e) in agg.rows() {
        println!("  {name:<26} {:>12.3} ± {:.3}", e.mean, e.ci95);
    }
}

/// `simulate` and `eval`: episodes, per-episode and aggregate CSVs.
pub fn simulate(cfg: &ExperimentConfig, args: &RunArgs, command: &str) -> Result<(), CliError> {
    let mut env = cfg.build_env()?;
    let mut ctl = controller(cfg)?;
    let name = format!("{command}-{}-seed{}", policy_name(cfg.policy), cfg.seed);
    let dir = output::run_dir(cfg, &name)?;
    let mut log = if args.events { Some(EventLog::create(&dir.join("events.jsonl"))?) } else { None };

    let mut reports = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let seed = episode_seed(cfg.seed, e);
        env.reset(seed);
        ctl.begin_episode(&env, seed)?;
        while !env.is_done() {
            let actions = ctl.act(&env)?;
            let info = env.advance(&actions)?;
            if let Some(log) = log.as_mut() {
                log.write(e, &info.events)?;
            }
        }
        reports.push(env.episode_metrics()?);
    }
    let agg = Aggregate::from_reports(&reports);
    output::write_episodes(&dir.join("episodes.csv"), &reports)?;
    output::write_summary(&dir.join("summary.csv"), &agg)?;
    let mut manifest = Manifest::new(command, cfg)?;
    manifest.files = vec!["episodes.csv".into(), "summary.csv".into()];
    if let Some(log) = log {
        log.finish()?;
        manifest.files.push("events.jsonl".into());
    }
    manifest.write(&dir)?;
    print_summary(&format!("{command} {}", policy_name(cfg.policy)), &agg);
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, args: &TrainArgs) -> Result<(), CliError> {
    let env: Env = cfg.build_env()?;
    let algo = match cfg.train.algorithm {
        Algorithm::Hsnac => "hsnac",
        Algorithm::Snac => "snac",
    };
    let dir = output::run_dir(cfg, &format!("train-{algo}-seed{}", cfg.train.seed))?;
    let hash = cfg.hash();
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)
                .map_err(|e| CliError::Config(format!("cannot load {}: {e}", path.display())))?;
            Trainer::resume(cfg.train.clone(), env.clone(), hash, ckpt)?
        }
        None => Trainer::new(cfg.train.clone(), env.clone(), hash)?,
    };
    let every = cfg.train.checkpoint_interval;
    while trainer.episodes_done < cfg.train.episodes {
        let before = trainer.episodes_done;
        let before_points = trainer.curve.len();
        trainer.step()?;
        for p in &trainer.curve[before_points..] {
            println!(
                "episode {:>6}  pick rate {:>8.1}  reward {:>8.4}  entropy {:.3}",
                p.episode, p.pick_rate, p.mean_reward, p.entropy
            );
        }
        if every > 0 && trainer.episodes_done / every > before / every {
            trainer.checkpoint().save(&checkpoint_path(&dir, trainer.episodes_done))?;
        }
    }
    trainer.checkpoint().save(&dir.join("checkpoint_final.json"))?;
    output::write_curve(&dir.join("learning_curve.csv"), &trainer.curve)?;

    let mut eval_env = env;
    let (reports, agg) = orderpick::eval::evaluate(
        &mut eval_env,
        &mut LearnedController::new(trainer.policy.clone(), ActMode::Greedy),
        cfg.episodes,
        cfg.seed,
    )?;
    output::write_episodes(&dir.join("final_episodes.csv"), &reports)?;
    output::write_summary(&dir.join("final_summary.csv"), &agg)?;
    let mut manifest = Manifest::new("train", cfg)?;
    manifest.files = vec![
        "checkpoint_final.json".into(),
        "learning_curve.csv".into(),
        "final_episodes.csv".into(),
        "final_summary.csv".into(),
    ];
    manifest.write(&dir)?;
    print_summary(&format!("final greedy evaluation ({algo})"), &agg);
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn bench(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let env = cfg.build_env()?;
    let report = run_bench(&env, &cfg.bench)?;
    let dir = output::run_dir(cfg, "bench")?;
    let mut f = std::fs::File::create(dir.join("bench.json"))?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    let mut manifest = Manifest::new("bench", cfg)?;
    manifest.files = vec!["bench.json".into()];
    manifest.write(&dir)?;
    println!(
        "{} locations, {} agents, {} envs on {} threads: {:.1} steps/s (std {:.1}, min {:.1}, max {:.1}) over {} samples after {} warm-up",
        report.locations,
        report.agents,
        report.n_envs,
        report.threads,
        report.steps_per_second,
        report.std,
        report.min,
        report.max,
        report.samples,
        report.warmup
    );
    Ok(())
}

#[derive(Serialize)]
struct LayoutFile<'a> {
    layout_hash: String,
    scale: f64,
    locations: &'a [orderpick::Location],
    edges: Vec<(u32, u32, f64)>,
}

pub fn export_layout(cfg: &ExperimentConfig, args: &ExportArgs) -> Result<(), CliError> {
    let graph = cfg.graph()?;
    let dir = output::run_dir(cfg, "layout")?;
    let file = LayoutFile {
        layout_hash: orderpick::pathing::layout_hash(&graph).iter().map(|b| format!("{b:02x}")).collect(),
        scale: graph.scale(),
        locations: graph.locations(),
        edges: graph.edges().map(|(a, b, w)| (a.0, b.0, w)).collect(),
    };
    let mut f = std::fs::File::create(dir.join("layout.json"))?;
    serde_json::to_writer_pretty(&mut f, &file)?;
    std::fs::write(dir.join("layout.txt"), graph.export_listing())?;
    drop(file);
    let (n_locations, n_items) = (graph.len(), graph.num_items());
    let mut files = vec!["layout.json".to_string(), "layout.txt".to_string()];
    if args.paths {
        let wh = orderpick::Warehouse::build(graph)?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("paths.bin"))?);
        wh.paths.write_to(&mut out)?;
        files.push("paths.bin".into());
    }
    let mut manifest = Manifest::new("export-layout", cfg)?;
    manifest.files = files;
    manifest.write(&dir)?;
    println!("{n_locations} locations, {n_items} items; wrote {}", dir.display());
    Ok(())
}
