//! Dev probe for the warm-up UCB1 tuning cells. Not shipped.

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

    let grid = [0.0, 0.02, 0.05, 0.08, 0.1, 0.12, 0.15, 0.18, 0.22, 0.26, 0.3, 0.35, 0.44];
    let pts = sweep_gamma(&spec, &prior, &grid, 2000, n, &base.child("curve", 0)).unwrap();
    println!("left-region curve (s=2000):");
    for (g, e) in &pts {
        println!("  gamma {:5.2}  mean {:8.2}  sd {:8.2}  se {:6.2}", g, e.mean, e.std, e.stderr);
    }

    for &(label, s, coupled) in &[
        ("ternary s=2000 coupled", 2000usize, true),
        ("ternary s=2000 uncoupled", 2000, false),
        ("ternary s=100 coupled", 100, true),
        ("ternary s=100 uncoupled", 100, false),
    ] {
        let schedule = budget_schedule(s, 6).unwrap();
        let reps = 120;
        let mut post = Vec::with_capacity(reps);
        let arm = base.child(label, 0);
        for r in 0..reps {
            let rs = arm.child("replication", r as u64);
            let trace =
                tune_ternary(&spec, &prior, n, &schedule, &rs.child("tune", 0), coupled).unwrap();
            let g = ts_clip(spec.kind, trace.gamma_hat);
            let mut eval = spec;
            eval.gamma = g;
            let e = empirical_bayes_regret(&eval, &prior, 400, n, &rs.child("posthoc", 0)).unwrap();
            post.push(e.mean);
        }
        let est = RegretEstimate::from_samples(&post);
        println!("{label}: posthoc mean {:7.2}  se {:5.2}", est.mean, est.stderr);
    }

    let arm = base.child("uniform100", 0);
    let reps = 200;
    let mut post = Vec::with_capacity(reps);
    let mut picks = std::collections::BTreeMap::new();
    for r in 0..reps {
        let rs = arm.child("replication", r as u64);
        let out = uniform_tune(&spec, &prior, n, 0.05, 100, &rs.child("tune", 0)).unwrap();
        *picks.entry((out.gamma_hat * 100.0).round() as i64).or_insert(0usize) += 1;
        let mut eval = spec;
        eval.gamma = out.gamma_hat;
        let e = empirical_bayes_regret(&eval, &prior, 400, n, &rs.child("posthoc", 0)).unwrap();
        post.push(e.mean);
    }
    let est = RegretEstimate::from_samples(&post);
    println!("uniform s=100: posthoc mean {:7.2}  se {:5.2}", est.mean, est.stderr);
    println!("  picks (gamma*100 -> count): {picks:?}");
}
