//! Lower bound on the expected sample size of any two-stage design with a
//! given interim size. For fixed multipliers the best second stage at each
//! interim statistic is found pointwise; the multipliers are then tuned so
//! that type-I error and expected power hit their targets.
//!
//! cargo run --release --example continuum_bound -- 33 35 37
//! Set L1 and L2 to evaluate fixed multipliers; set VERBOSE for a trace.

use adaptrial::stats::{norm_pdf, norm_sf};
use adaptrial::TruncatedNormalPrior;

const ALPHA: f64 = 0.025;
const POWER: f64 = 0.8;

/// Quantities at one interim statistic, weighted by the marginal densities.
struct Node {
    z: f64,
    /// marginal density under the unconditional prior
    marginal: f64,
    /// null density
    null: f64,
    /// (effect, weight × density) under the prior given a positive effect
    alt: Vec<(f64, f64)>,
    alt_total: f64,
}

/// Best Lagrangian value at second-stage size `s²`, and the threshold `q`
/// on the second-stage statistic.
fn lagrangian(p: &Node, s: f64, l1: f64, l2: f64) -> (f64, f64) {
    // stationarity in q: log Σ w exp(q t s − t²s²/2) = log(l1 φ₀ / l2), increasing in q
    let target = (l1 * p.null / l2).ln();
    let mut q = 0.0f64;
    for _ in 0..60 {
        let top = p.alt.iter().map(|&(t, _)| q * t * s - 0.5 * t * t * s * s).fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut slope) = (0.0, 0.0);
        for &(t, w) in &p.alt {
            let e = w * (q * t * s - 0.5 * t * t * s * s - top).exp();
            sum += e;
            slope += e * t * s;
        }
        let step = (sum.ln() + top - target) / (slope / sum);
        q -= step.clamp(-5.0, 5.0);
        if step.abs() < 1e-12 {
            break;
        }
    }
    let power: f64 = p.alt.iter().map(|&(t, w)| w * norm_sf(q - t * s)).sum();
    (p.marginal * s * s + l1 * p.null * norm_sf(q) - l2 * power, q)
}

enum Decision {
    Futility,
    Efficacy,
    Continue { extra: f64, q: f64 },
}

fn decide(p: &Node, l1: f64, l2: f64) -> Decision {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 1..=30 {
        let s = 0.4 * i as f64;
        let (v, q) = lagrangian(p, s, l1, l2);
        if v < best.0 {
            best = (v, s, q);
        }
    }
    let (mut a, mut b) = ((best.1 - 0.4).max(1e-3), best.1 + 0.4);
    for _ in 0..30 {
        let x1 = b - 0.618 * (b - a);
        let x2 = a + 0.618 * (b - a);
        if lagrangian(p, x1, l1, l2).0 < lagrangian(p, x2, l1, l2).0 {
            b = x2
        } else {
            a = x1
        }
    }
    let s = 0.5 * (a + b);
    let (v, q) = lagrangian(p, s, l1, l2);
    if v < best.0 {
        best = (v, s, q);
    }
    let reject = l1 * p.null - l2 * p.alt_total;
    if best.0 <= reject.min(0.0) {
        Decision::Continue { extra: best.1 * best.1, q: best.2 }
    } else if reject < 0.0 {
        Decision::Efficacy
    } else {
        Decision::Futility
    }
}

struct Summary {
    type_one: f64,
    power: f64,
    expected_n: f64,
    sd_n: f64,
    min_pp: f64,
}

/// Characteristics of the pointwise rule on a midpoint grid of step `h`;
/// mass above `upper` counts as rejection.
fn summarise(nodes: &[Node], h: f64, upper: f64, m: f64, l1: f64, l2: f64, verbose: bool) -> Summary {
    let (mut type_one, mut power, mut extra, mut square) = (norm_sf(upper), 0.0, 0.0, 0.0);
    let mut min_pp = f64::INFINITY;
    for (i, p) in nodes.iter().enumerate() {
        match decide(p, l1, l2) {
            Decision::Futility => {}
            Decision::Efficacy => {
                type_one += h * p.null;
                power += h * p.alt_total;
            }
            Decision::Continue { extra: e, q } => {
                let s = e.sqrt();
                let pw: f64 = p.alt.iter().map(|&(t, w)| w * norm_sf(q - t * s)).sum();
                type_one += h * p.null * norm_sf(q);
                power += h * pw;
                extra += h * p.marginal * e;
                square += h * p.marginal * ((m + e) * (m + e) - m * m);
                min_pp = min_pp.min(pw / p.alt_total);
                if verbose && i % 30 == 0 {
                    let c = (m / (m + e)).sqrt() * p.z + (e / (m + e)).sqrt() * q;
                    println!("z {:.3}: n {:.2}, c {c:.4}, pp {:.4}", p.z, m + e, pw / p.alt_total);
                }
            }
        }
    }
    let expected_n = m + extra;
    let sd_n = (m * m + square - expected_n * expected_n).sqrt();
    Summary { type_one, power, expected_n, sd_n, min_pp }
}

/// Root of an increasing function by a bracketed Illinois iteration.
fn illinois(g: &dyn Fn(f64) -> f64, x0: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (x0, x0 + 1.0);
    let (mut ga, mut gb) = (g(a), g(b));
    while ga > 0.0 {
        (b, gb) = (a, ga);
        a -= 1.0;
        ga = g(a);
    }
    while gb < 0.0 {
        (a, ga) = (b, gb);
        b += 1.0;
        gb = g(b);
    }
    let mut side = 0;
    for _ in 0..60 {
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = g(c);
        if gc.abs() < tol || b - a < 1e-10 {
            return c;
        }
        if gc < 0.0 {
            (a, ga) = (c, gc);
            if side == -1 {
                gb *= 0.5
            }
            side = -1;
        } else {
            (b, gb) = (c, gc);
            if side == 1 {
                ga *= 0.5
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

fn main() {
    let prior = TruncatedNormalPrior::new(0.4, 0.2, -0.5, 1.0).unwrap();
    let positive = prior.condition_positive().unwrap().rule(64);
    let all = prior.rule(64);
    let verbose = std::env::var("VERBOSE").is_ok();
    let fixed = match (std::env::var("L1"), std::env::var("L2")) {
        (Ok(a), Ok(b)) => Some((a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap())),
        _ => None,
    };
    for m in std::env::args().skip(1).map(|a| a.parse::<f64>().unwrap()) {
        let root = m.sqrt();
        // mass below the grid always stops for futility, above it for efficacy
        let (lower, upper, count) = (-1.5, 4.5, 900);
        let h = (upper - lower) / count as f64;
        let nodes: Vec<Node> = (0..count)
            .map(|i| {
                let z = lower + (i as f64 + 0.5) * h;
                let alt: Vec<(f64, f64)> = positive.iter().map(|&(t, w)| (t, w * norm_pdf(z - root * t))).collect();
                Node {
                    z,
                    marginal: all.iter().map(|&(t, w)| w * norm_pdf(z - root * t)).sum(),
                    null: norm_pdf(z),
                    alt_total: alt.iter().map(|x| x.1).sum(),
                    alt,
                }
            })
            .collect();
        let tail: f64 = positive.iter().map(|&(t, w)| w * norm_sf(upper - root * t)).sum();
        let eval = |l1: f64, l2: f64, verbose: bool| {
            let mut s = summarise(&nodes, h, upper, m, l1, l2, verbose);
            s.power += tail;
            s
        };
        let (l1, l2) = fixed.unwrap_or_else(|| {
            let l1_for = |l2: f64| illinois(&|x: f64| ALPHA - eval(x.exp(), l2, false).type_one, 0.0, 1e-7).exp();
            let l2 = illinois(&|y: f64| eval(l1_for(y.exp()), y.exp(), false).power - POWER, 4.0, 1e-6).exp();
            (l1_for(l2), l2)
        });
        let s = eval(l1, l2, verbose);
        println!(
            "m {m}: l1 {l1:.3}, l2 {l2:.3}, type-I {:.5}, power {:.5}, E[n] {:.4}, sd {:.4}, min pp {:.4}",
            s.type_one, s.power, s.expected_n, s.sd_n, s.min_pp
        );
    }
}
