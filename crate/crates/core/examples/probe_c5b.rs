//! Dev probe: precise warm-up UCB1 curve bottom and acceptance-seed C5 arms
//! with uncoupled probe rewards. Not shipped.

use banditune_core::env::InstancePrior;
use banditune_core::evaluator::{empirical_bayes_regret, sweep_gamma, RegretEstimate};
use banditune_core::policies::{PolicyKind, PolicySpec};
use banditune_core::rng::{derive_stream, Seed};
use banditune_core::tuner::{budget_schedule, ts_clip, tune_ternary, uniform_tune};

fn main() {
    let n = 10_000;
    let prior = InstancePrior::warm_up();
    let spec = PolicySpec::new(PolicyKind::Ucb1, 1.0, n);

    let base = derive_stream(Seed(4242), &[("probe", 0)]);
    let grid = [0.26, 0.28, 0.30, 0.32, 0.34, 0.36, 0.38, 0.40, 0.44];
    let pts = sweep_gamma(&spec, &prior, &grid, 30_000, n, &base.child("bottom", 0)).unwrap();
    println!("curve bottom (s=30000):");
    for (g, e) in &pts {
        println!("  gamma {:4.2}  mean {:6.2}  se {:5.2}", g, e.mean, e.stderr);
    }

    // Exact acceptance-protocol arms at the acceptance master seed, with
    // probe rewards uncoupled.
    let reps = 200u64;
    for &(label, s) in &[("c5_ternary_2000", 2000usize), ("c5_ternary_100", 100)] {
        let arm = derive_stream(Seed(17), &[(label, 0)]);
        let schedule = budget_schedule(s, 6).unwrap();
        let mut post = Vec::new();
        let mut hist = std::collections::BTreeMap::new();
        for r in 0..reps {
            let rs = arm.child("replication", r);
            let trace =
                tune_ternary(&spec, &prior, n, &schedule, &rs.child("tune", 0), false).unwrap();
            let g = ts_clip(spec.kind, trace.gamma_hat);
            *hist.entry((g * 20.0).round() as i64).or_insert(0usize) += 1;
            let mut eval = spec;
            eval.gamma = g;
            let e =
                empirical_bayes_regret(&eval, &prior, 1000, n, &rs.child("posthoc", 0)).unwrap();
            post.push(e.mean);
        }
        let est = RegretEstimate::from_samples(&post);
        println!("{label} uncoupled: posthoc mean {:6.2}  se {:5.2}", est.mean, est.stderr);
        println!("  gamma_hat (x/20 -> count): {hist:?}");
    }

    let arm = derive_stream(Seed(17), &[("c5_uniform_100", 0)]);
    let mut post = Vec::new();
    let mut picks = std::collections::BTreeMap::new();
    for r in 0..reps {
        let rs = arm.child("replication", r);
        let out = uniform_tune(&spec, &prior, n, 0.05, 100, &rs.child("tune", 0)).unwrap();
        *picks.entry((out.gamma_hat * 100.0).round() as i64).or_insert(0usize) += 1;
        let mut eval = spec;
        eval.gamma = out.gamma_hat;
        let e = empirical_bayes_regret(&eval, &prior, 1000, n, &rs.child("posthoc", 0)).unwrap();
        post.push(e.mean);
    }
    let est = RegretEstimate::from_samples(&post);
    println!("c5_uniform_100: posthoc mean {:7.2}  se {:5.2}", est.mean, est.stderr);
    println!("  picks (gamma*100 -> count): {picks:?}");
}
