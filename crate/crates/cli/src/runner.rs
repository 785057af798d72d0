//! Mode dispatch: each experiment mode reads the config, runs the core
//! routines under the seeding contract, and emits one CSV.
//!
//! Stream layout per run: every top-level activity gets its own labeled
//! child of the master seed, so adding a mode or reordering work never
//! shifts the numbers of another mode.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use banditune_core::evaluator::{
    empirical_bayes_regret, regrets_with, sweep_gamma, RegretEstimate,
};
use banditune_core::gittins::{gittins_table_cached, GittinsAgent};
use banditune_core::policies::{PolicyKind, PolicySpec};
use banditune_core::rng::{derive_stream, RandomStream, Seed};
use banditune_core::tuner::{
    budget_schedule, theory_schedule, ts_clip, tune_ternary, uniform_tune, TS_GAMMA_FLOOR,
};
use banditune_core::validation::{estimate_m, gap_std_scatter, pearson};

use crate::config::{step_grid, ExperimentConfig, Mode};
use crate::output::{Field, OutputFile};

pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn run(config: &ExperimentConfig, mode_arg: Mode, overrides: &Overrides) -> Result<()> {
    let mode = config.mode()?;
    if mode != mode_arg {
        bail!(
            "config holds a [{}] section but the {} subcommand was invoked",
            mode.section(),
            mode_arg.section()
        );
    }
    let seed = overrides.seed.unwrap_or(config.seed);
    let threads = overrides.threads.unwrap_or(config.threads);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("worker pool already initialized")?;
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| config.out.as_ref().map(PathBuf::from))
        .context("no output path: set `out` in the config or pass --out")?;

    let master = derive_stream(Seed(seed), &[("run", 0)]);
    match mode {
        Mode::Sweep => run_sweep(config, seed, &master, &out),
        Mode::TuneTernary => run_tune_ternary(config, seed, &master, &out),
        Mode::TuneUniform => run_tune_uniform(config, seed, &master, &out),
        Mode::GittinsCompare => run_gittins(config, seed, &master, &out),
        Mode::Validate => run_validate(config, seed, &master, &out),
    }
}

/// TS-family policies reject or degenerate at tiny widths, so evaluated
/// grids clip to the same floor the tuner uses.
fn clip_grid_for(kind: PolicyKind, grid: &[f64]) -> Vec<f64> {
    let mut clipped: Vec<f64> = grid.iter().map(|&g| ts_clip(kind, g)).collect();
    clipped.dedup();
    clipped
}

fn run_sweep(
    config: &ExperimentConfig,
    seed: u64,
    master: &RandomStream,
    out: &Path,
) -> Result<()> {
    let sweep = config.sweep.as_ref().expect("mode checked");
    let prior = config.instance_prior()?;
    let template = config.policy_spec(1.0)?;
    let grid = clip_grid_for(template.kind, &config.sweep_grid()?);
    let base = master.child("sweep", 0);
    let points = sweep_gamma(&template, &prior, &grid, sweep.s, config.n, &base)?;

    let (best_gamma, best) = points
        .iter()
        .map(|(g, e)| (*g, e))
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("grid is nonempty");
    let mut file = OutputFile::create(
        out,
        config,
        seed,
        &[
            ("best_gamma", crate::output::fmt_sig(best_gamma, 6)),
            ("best_regret", crate::output::fmt_sig(best.mean, 6)),
        ],
    )?;
    file.header(&["gamma", "mean_regret", "std", "stderr", "instances"])?;
    for (gamma, est) in &points {
        file.row(&[
            Field::Num(*gamma),
            Field::Num(est.mean),
            Field::Num(est.std),
            Field::Num(est.stderr),
            Field::Int(est.count as u64),
        ])?;
    }
    file.finish()
}

struct TuneOutcome {
    gamma_hat: f64,
    tune_samples: usize,
    posthoc: RegretEstimate,
}

fn write_replications(
    config: &ExperimentConfig,
    seed: u64,
    out: &Path,
    extra: Vec<(&str, String)>,
    outcomes: &[TuneOutcome],
) -> Result<()> {
    let means: Vec<f64> = outcomes.iter().map(|o| o.posthoc.mean).collect();
    let summary = RegretEstimate::from_samples(&means);
    let mut header = extra;
    header.push(("replications", outcomes.len().to_string()));
    header.push(("posthoc_mean", crate::output::fmt_sig(summary.mean, 6)));
    header.push(("posthoc_stderr", crate::output::fmt_sig(summary.stderr, 6)));
    let mut file = OutputFile::create(out, config, seed, &header)?;
    file.header(&[
        "replication",
        "gamma_hat",
        "posthoc_mean",
        "posthoc_std",
        "posthoc_stderr",
        "tune_samples",
    ])?;
    for (rep, o) in outcomes.iter().enumerate() {
        file.row(&[
            Field::Int(rep as u64),
            Field::Num(o.gamma_hat),
            Field::Num(o.posthoc.mean),
            Field::Num(o.posthoc.std),
            Field::Num(o.posthoc.stderr),
            Field::Int(o.tune_samples as u64),
        ])?;
    }
    file.finish()
}

fn posthoc_eval(
    config: &ExperimentConfig,
    gamma_hat: f64,
    posthoc_s: usize,
    rep_stream: &RandomStream,
) -> Result<RegretEstimate> {
    let spec = config.policy_spec(gamma_hat)?;
    let base = rep_stream.child("posthoc", 0);
    Ok(empirical_bayes_regret(&spec, &config.instance_prior()?, posthoc_s, config.n, &base)?)
}

fn run_tune_ternary(
    config: &ExperimentConfig,
    seed: u64,
    master: &RandomStream,
    out: &Path,
) -> Result<()> {
    let tern = config.tune_ternary.as_ref().expect("mode checked");
    let prior = config.instance_prior()?;
    let template = config.policy_spec(1.0)?;
    let schedule = match tern.schedule.as_deref().unwrap_or("budget") {
        "budget" => budget_schedule(tern.s, tern.steps.expect("checked at load"))?,
        _ => theory_schedule(
            tern.epsilon.expect("checked at load"),
            tern.delta.expect("checked at load"),
            tern.m.expect("checked at load"),
        )?,
    };

    let mut outcomes = Vec::with_capacity(tern.replications);
    for rep in 0..tern.replications {
        let rep_stream = master.child("replication", rep as u64);
        let trace = tune_ternary(
            &template,
            &prior,
            config.n,
            &schedule,
            &rep_stream.child("tune", 0),
            false,
        )?;
        // The midpoint of the final interval can sit below the TS floor when
        // the curve bottoms out there; report the width that actually runs.
        let gamma_hat = ts_clip(template.kind, trace.gamma_hat);
        let posthoc = posthoc_eval(config, gamma_hat, tern.posthoc_s, &rep_stream)?;
        outcomes.push(TuneOutcome {
            gamma_hat,
            tune_samples: trace.total_samples,
            posthoc,
        });
    }
    write_replications(
        config,
        seed,
        out,
        vec![("schedule", format!("{:?}", schedule.sizes))],
        &outcomes,
    )
}

fn run_tune_uniform(
    config: &ExperimentConfig,
    seed: u64,
    master: &RandomStream,
    out: &Path,
) -> Result<()> {
    let uni = config.tune_uniform.as_ref().expect("mode checked");
    let prior = config.instance_prior()?;
    let template = config.policy_spec(1.0)?;

    let mut outcomes = Vec::with_capacity(uni.replications);
    for rep in 0..uni.replications {
        let rep_stream = master.child("replication", rep as u64);
        let tuned = tune_uniform_once(config, uni.epsilon, uni.s, &template, &prior, &rep_stream)?;
        let posthoc = posthoc_eval(config, tuned.0, uni.posthoc_s, &rep_stream)?;
        outcomes.push(TuneOutcome { gamma_hat: tuned.0, tune_samples: tuned.1, posthoc });
    }
    write_replications(
        config,
        seed,
        out,
        vec![("epsilon", crate::output::fmt_sig(uni.epsilon, 6))],
        &outcomes,
    )
}

fn tune_uniform_once(
    config: &ExperimentConfig,
    epsilon: f64,
    s: usize,
    template: &PolicySpec,
    prior: &banditune_core::env::InstancePrior,
    rep_stream: &RandomStream,
) -> Result<(f64, usize)> {
    let result = uniform_tune(
        template,
        prior,
        config.n,
        epsilon,
        s,
        &rep_stream.child("tune", 0),
    )?;
    Ok((result.gamma_hat, result.total_samples))
}

fn run_gittins(
    config: &ExperimentConfig,
    seed: u64,
    master: &RandomStream,
    out: &Path,
) -> Result<()> {
    let git = config.gittins_compare.as_ref().expect("mode checked");
    let prior = config.instance_prior()?;
    let horizon = u32::try_from(config.n).context("horizon too large for an index table")?;
    let cache = git
        .cache
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| default_cache_path(out, config.n));
    let table = gittins_table_cached(horizon, git.tol, &cache)?;

    let grid = step_grid(git.grid_step);
    let mut curves = Vec::new();
    for kind in [PolicyKind::Ucb1, PolicyKind::BernTs] {
        let mut template = config.policy_spec(1.0)?;
        template.kind = kind;
        let clipped = clip_grid_for(kind, &grid);
        let base = master.child(kind.name(), 0);
        let points = sweep_gamma(&template, &prior, &clipped, git.s, config.n, &base)?;
        curves.push((kind.name(), points));
    }
    let base = master.child("gittins", 0);
    let samples = regrets_with(
        |inst| GittinsAgent::new(&table, config.n, inst.k),
        &prior,
        git.s,
        config.n,
        &base,
    )?;
    let gittins = RegretEstimate::from_samples(&samples);

    let mut file = OutputFile::create(
        out,
        config,
        seed,
        &[
            ("table_horizon", horizon.to_string()),
            ("table_tol", crate::output::fmt_sig(git.tol, 6)),
            ("gittins_regret", crate::output::fmt_sig(gittins.mean, 6)),
        ],
    )?;
    file.header(&["policy", "gamma", "mean_regret", "std", "stderr", "instances"])?;
    for (name, points) in &curves {
        for (gamma, est) in points {
            file.row(&[
                Field::Text((*name).into()),
                Field::Num(*gamma),
                Field::Num(est.mean),
                Field::Num(est.std),
                Field::Num(est.stderr),
                Field::Int(est.count as u64),
            ])?;
        }
    }
    file.row(&[
        Field::Text("gittins".into()),
        Field::Empty,
        Field::Num(gittins.mean),
        Field::Num(gittins.std),
        Field::Num(gittins.stderr),
        Field::Int(gittins.count as u64),
    ])?;
    file.finish()
}

fn default_cache_path(out: &Path, n: usize) -> PathBuf {
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    dir.join(format!("gittins_{n}.bin"))
}

fn run_validate(
    config: &ExperimentConfig,
    seed: u64,
    master: &RandomStream,
    out: &Path,
) -> Result<()> {
    let val = config.validate.as_ref().expect("mode checked");
    let prior = config.instance_prior()?;
    let template = config.policy_spec(1.0)?;

    let gamma_star = match val.gamma_star {
        Some(star) => star,
        None => {
            // Reference minimizer from a fine sweep, step 0.02.
            let grid = clip_grid_for(template.kind, &step_grid(0.02));
            let base = master.child("gamma_star", 0);
            let points = sweep_gamma(&template, &prior, &grid, val.star_s, config.n, &base)?;
            points
                .iter()
                .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(a.0.total_cmp(&b.0)))
                .expect("grid is nonempty")
                .0
        }
    };
    let a_grid = match &val.a_grid {
        Some(grid) => grid.clone(),
        None => default_a_grid(template.kind, gamma_star)?,
    };

    let points = gap_std_scatter(
        &template,
        &prior,
        gamma_star,
        &a_grid,
        val.s,
        config.n,
        &master.child("scatter", 0),
    )?;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let correlation = pearson(&xs, &ys);
    let slope = estimate_m(&points).map(|m| crate::output::fmt_sig(m, 6));

    let mut file = OutputFile::create(
        out,
        config,
        seed,
        &[
            ("gamma_star", crate::output::fmt_sig(gamma_star, 6)),
            ("pearson", crate::output::fmt_sig(correlation, 6)),
            ("estimate_m", slope.unwrap_or_else(|e| format!("unavailable ({e})"))),
        ],
    )?;
    file.header(&["a", "b", "x", "y", "stderr_y"])?;
    for p in &points {
        file.row(&[
            Field::Num(p.a),
            Field::Num(p.b),
            Field::Num(p.x),
            Field::Num(p.y),
            Field::Num(p.stderr_y),
        ])?;
    }
    file.finish()
}

/// Ten evenly spaced probes strictly below `gamma_star`, floored for
/// posterior-width policies.
fn default_a_grid(kind: PolicyKind, gamma_star: f64) -> Result<Vec<f64>> {
    let floor = if kind.is_posterior_width() { TS_GAMMA_FLOOR } else { 0.0 };
    if gamma_star <= floor {
        bail!(
            "validate.gamma_star = {gamma_star} leaves no room for probes below it; \
             pass an explicit a_grid"
        );
    }
    let count = 10;
    Ok((0..count)
        .map(|i| floor + (gamma_star - floor) * i as f64 / count as f64)
        .collect())
}
