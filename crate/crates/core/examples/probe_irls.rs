//! Dev probe: iteration counts of the grouped IRLS solver on separation
//! geometries, to pick a regression-test construction that distinguishes
//! capped from uncapped Newton directions.

use banditune_core::numerics::{irls_logistic_grouped, IrlsScratch};
use banditune_core::rng::{derive_stream, Seed};
use nalgebra::DVector;

fn run(name: &str, d: usize, features: &[f64], pulls: &[f64], successes: &[f64]) {
    let arms: Vec<usize> = (0..pulls.len()).collect();
    let mut theta = DVector::zeros(d);
    let mut scratch = IrlsScratch::new(d, pulls.len());
    let res = irls_logistic_grouped(
        features,
        d,
        &arms,
        pulls,
        successes,
        1e-6,
        1e-6,
        10_000,
        &mut theta,
        &mut scratch,
        |_| {},
    );
    match res {
        Ok(iters) => println!("{name}: Ok after {iters} iters, |theta| = {:.2}", theta.norm()),
        Err(e) => println!("{name}: Err {e:?}"),
    }
}

fn main() {
    let d = 5;

    // A: full separation, comfortable margins.
    {
        let mut rng = derive_stream(Seed(77), &[("sep", 0)]);
        let w = [0.9, -0.4, 0.2, -0.7, 0.5];
        let mut features: Vec<f64> = Vec::new();
        let mut margins: Vec<f64> = Vec::new();
        while margins.len() < 12 {
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            if m.abs() >= 0.4 {
                features.extend_from_slice(&x);
                margins.push(m);
            }
        }
        let pulls = vec![1.0; margins.len()];
        let succ: Vec<f64> = margins.iter().map(|&m| f64::from(u8::from(m > 0.0))).collect();
        run("A margins>=0.4", d, &features, &pulls, &succ);
    }

    // B: full separation, tiny margins (far optimum).
    {
        let mut rng = derive_stream(Seed(77), &[("sep", 1)]);
        let w = [0.9, -0.4, 0.2, -0.7, 0.5];
        let mut features: Vec<f64> = Vec::new();
        let mut margins: Vec<f64> = Vec::new();
        while margins.len() < 12 {
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            if m.abs() >= 0.02 && m.abs() <= 0.08 {
                features.extend_from_slice(&x);
                margins.push(m);
            }
        }
        let pulls = vec![1.0; margins.len()];
        let succ: Vec<f64> = margins.iter().map(|&m| f64::from(u8::from(m > 0.0))).collect();
        run("B margins in [0.02,0.08]", d, &features, &pulls, &succ);
    }

    // C: partial separation. Two heavy groups pin stiff directions at
    // moderate logits; single-pull points are separable with small margins
    // in the orthogonal complement, so the optimum is far along directions
    // where curvature is ~ridge.
    {
        let mut features: Vec<f64> = Vec::new();
        let mut pulls: Vec<f64> = Vec::new();
        let mut succ: Vec<f64> = Vec::new();
        // Heavy groups along e0, e1.
        features.extend_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        pulls.push(200.0);
        succ.push(120.0);
        features.extend_from_slice(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        pulls.push(200.0);
        succ.push(90.0);
        // Separable singletons in span(e2,e3,e4), separator w = (1,1,1)/sqrt(3).
        let mut rng = derive_stream(Seed(77), &[("sep", 2)]);
        let w = [0.0, 0.0, 0.6, 0.6, 0.52];
        let mut added = 0;
        while added < 10 {
            let mut x = [0.0; 5];
            for xi in x.iter_mut().skip(2) {
                *xi = 2.0 * rng.next_f64() - 1.0;
            }
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            if m.abs() >= 0.02 && m.abs() <= 0.1 {
                features.extend_from_slice(&x);
                pulls.push(1.0);
                succ.push(f64::from(u8::from(m > 0.0)));
                added += 1;
            }
        }
        run("C partial separation", d, &features, &pulls, &succ);
    }

    // D: like C but the singleton block also has tiny cross-loadings onto
    // the stiff coordinates, coupling flat and stiff directions.
    {
        let mut features: Vec<f64> = Vec::new();
        let mut pulls: Vec<f64> = Vec::new();
        let mut succ: Vec<f64> = Vec::new();
        features.extend_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        pulls.push(500.0);
        succ.push(300.0);
        features.extend_from_slice(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        pulls.push(500.0);
        succ.push(225.0);
        let mut rng = derive_stream(Seed(77), &[("sep", 3)]);
        let w = [0.0, 0.0, 0.6, 0.6, 0.52];
        let mut added = 0;
        while added < 10 {
            let mut x = [0.0; 5];
            x[0] = 0.3 * (2.0 * rng.next_f64() - 1.0);
            x[1] = 0.3 * (2.0 * rng.next_f64() - 1.0);
            for xi in x.iter_mut().skip(2) {
                *xi = 2.0 * rng.next_f64() - 1.0;
            }
            let m: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            if m.abs() >= 0.02 && m.abs() <= 0.1 {
                features.extend_from_slice(&x);
                pulls.push(1.0);
                succ.push(f64::from(u8::from(m > 0.0)));
                added += 1;
            }
        }
        run("D coupled partial separation", d, &features, &pulls, &succ);
    }
}
