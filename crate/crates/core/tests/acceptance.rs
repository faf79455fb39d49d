//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::{Duration, Instant};

use rand::{Rng, RngCore};

use dprlab_core::coarse_grain::{a_n_probability, dyadic_eta_search};
use dprlab_core::order_stats::{unimodal_convolution_check, uniform_tau_identity};
use dprlab_core::partition::{exact_w, free_energy_gap, martingale_check, mean_w_mc, PolymerConfig};
use dprlab_core::rng::{replica_rng, Stream};
use dprlab_core::size_bias::{birkner_detector, h_beta, lln_slope_check, Trend};
use dprlab_core::{Entropy, EnvironmentLaw, IncrementLaw, LatticeField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn critical(alpha: f64) -> IncrementLaw {
    IncrementLaw::critical(alpha).unwrap()
}

fn config(law: IncrementLaw, env: EnvironmentLaw, beta: f64, n: usize, m: usize, seed: u64) -> PolymerConfig {
    PolymerConfig {
        beta,
        horizon: n,
        half_width: m,
        law,
        env,
        seed,
    }
}

fn martingale() -> Outcome {
    let env = EnvironmentLaw::bernoulli(0.5).unwrap();
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let cfg = config(critical(-2.0), env.clone(), 1.0, n, 2, 11);
        worst = worst.max(martingale_check(&cfg, 4).unwrap());
    }
    outcome(worst <= 1e-10, format!("max discrepancy {worst:.3e}"))
}

fn normalization() -> Outcome {
    let cfg = config(critical(-2.0), EnvironmentLaw::Gaussian, 0.5, 10, 40, 21);
    let est = mean_w_mc(&cfg, 2000).unwrap();
    let dev = (est.mean - 1.0).abs();
    outcome(dev <= 3.0 * est.stderr, format!("mean {:.5} se {:.5}", est.mean, est.stderr))
}

/// Sum over all windowed paths, jumps in `[-2M, 2M]` with renormalised
/// weights, positions reduced onto the ring.
fn enumerate_w(cfg: &PolymerConfig, field: &LatticeField) -> f64 {
    let m = cfg.half_width as i64;
    let jumps: Vec<i64> = (-2 * m..=2 * m).collect();
    let norm: f64 = jumps.iter().map(|j| cfg.law.pmf(*j)).sum();
    let lambda = cfg.env.lambda(cfg.beta);
    let ring = 2 * m + 1;
    fn rec(
        cfg: &PolymerConfig,
        field: &LatticeField,
        jumps: &[i64],
        norm: f64,
        lambda: f64,
        ring: i64,
        n: u64,
        z: i64,
    ) -> f64 {
        if n > cfg.horizon as u64 {
            return 1.0;
        }
        let m = cfg.half_width as i64;
        jumps
            .iter()
            .map(|&j| {
                let y = (z + j + m).rem_euclid(ring) - m;
                cfg.law.pmf(j) / norm
                    * (cfg.beta * field.value(n, y) - lambda).exp()
                    * rec(cfg, field, jumps, norm, lambda, ring, n + 1, y)
            })
            .sum()
    }
    rec(cfg, field, &jumps, norm, lambda, ring, 1, 0)
}

fn brute_force() -> Outcome {
    let mut rng = replica_rng(31, Stream::Walk, 0);
    let laws = [critical(-2.0), critical(-3.0), IncrementLaw::nearest_neighbor(0.3).unwrap()];
    let envs = [
        EnvironmentLaw::Gaussian,
        EnvironmentLaw::bernoulli(0.3).unwrap(),
        EnvironmentLaw::discrete(vec![(-1.0, 0.25), (0.5, 0.5), (2.0, 0.25)]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 24 {
        let m = rng.random_range(1..=5usize);
        let n = rng.random_range(1..=5usize);
        if ((4 * m + 1) as f64).powi(n as i32) > 2e6 {
            continue;
        }
        let beta = rng.random_range(0.1..2.0);
        let cfg = config(
            laws[count % 3].clone(),
            envs[(count / 3) % 3].clone(),
            beta,
            n,
            m,
            rng.next_u64(),
        );
        let field = cfg.field(0);
        let dp = exact_w(&cfg, &field).unwrap().w[n - 1];
        let brute = enumerate_w(&cfg, &field);
        worst = worst.max((dp - brute).abs() / brute);
        count += 1;
    }
    outcome(worst <= 1e-10, format!("{count} configs, max rel err {worst:.3e}"))
}

fn lemma_a1() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [0.1, 0.5] {
        let env = EnvironmentLaw::bernoulli(p).unwrap();
        let err = (env.excess(50.0) - (1.0 / p).ln()).abs();
        pass &= err <= 1e-6;
        detail.push(format!("p={p}: err {err:.2e}"));
    }
    outcome(pass, detail.join(", "))
}

/// Entropy of the critical law as a direct sum over `|n| ≤ X` plus the
/// tail integral in `v = ln ln y`, `y = |n| + m0`.
fn entropy_oracle(law: &IncrementLaw, alpha: f64) -> f64 {
    let x: i64 = 1_000_000;
    let head: f64 = (-x..=x)
        .map(|n| {
            let p = law.pmf(n);
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum();
    let a = law.norm_const().unwrap();
    let m0 = law.spec().m0 as f64;
    let v0 = (x as f64 + m0 + 0.5).ln().ln();
    // A ∫ v^α [1 + (2v - α ln v - ln A) e^{-v}] dv over [v0, ∞).
    let leading = a * v0.powf(alpha + 1.0) / (-alpha - 1.0);
    let g = |v: f64| a * v.powf(alpha) * (2.0 * v - alpha * v.ln() - a.ln()) * (-v).exp();
    let steps = 200_000;
    let h = 60.0 / steps as f64;
    let mut simpson = g(v0) + g(v0 + 60.0);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        simpson += w * g(v0 + i as f64 * h);
    }
    head + 2.0 * (leading + simpson * h / 3.0)
}

fn entropy_dichotomy() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for alpha in [-3.0, -2.0] {
        let law = critical(alpha);
        match law.entropy(1e-6).unwrap() {
            Entropy::Finite { value, lower, upper } => {
                let oracle = entropy_oracle(&law, alpha);
                let ok = upper - lower < 1e-4 && (value - oracle).abs() < 1e-4;
                pass &= ok;
                detail.push(format!("a={alpha}: H={value:.6} oracle={oracle:.6} width={:.1e}", upper - lower));
            }
            Entropy::Divergent { .. } => {
                pass = false;
                detail.push(format!("a={alpha}: divergent"));
            }
        }
    }
    for alpha in [-1.0, 0.0, 1.0] {
        let ok = !critical(alpha).entropy(1e-6).unwrap().is_finite();
        pass &= ok;
        if !ok {
            detail.push(format!("a={alpha}: finite"));
        }
    }
    outcome(pass, detail.join(", "))
}

fn lln_slope() -> Outcome {
    let law = critical(-2.0);
    let mut pass = true;
    let mut detail = Vec::new();
    for beta in [1.0, 3.0] {
        let h = h_beta(&law, &EnvironmentLaw::Gaussian, beta).unwrap().value;
        let est = lln_slope_check(&law, &EnvironmentLaw::Gaussian, beta, 1000, 1000, 61).unwrap();
        let ok = (est.mean - h).abs() <= 4.0 * est.stderr;
        pass &= ok;
        detail.push(format!("b={beta}: h={h:.4} est={:.4}±{:.4}", est.mean, est.stderr));
    }
    outcome(pass, detail.join(", "))
}

fn size_bias_trend() -> Outcome {
    let law = critical(-2.0);
    let beta = 2.5;
    let h = h_beta(&law, &EnvironmentLaw::Gaussian, beta).unwrap().value;
    let cfg = config(law, EnvironmentLaw::Gaussian, beta, 64, 64, 71);
    let report = birkner_detector(&cfg, &[8, 16, 32, 64], &[2.0], 2000).unwrap();
    let t = report.trends[0];
    outcome(
        h > 0.0 && t.trend == Trend::Increasing,
        format!("h={h:.3}, diff {:.4}, pooled se {:.4}", t.diff, t.pooled_stderr),
    )
}

fn tau_identity() -> Outcome {
    let t = uniform_tau_identity(2, 100_000, 81).unwrap();
    outcome(
        (t.freq - 0.4).abs() <= 4.0 * t.stderr,
        format!("freq {:.5} se {:.5}", t.freq, t.stderr),
    )
}

fn unimodal_bound() -> Outcome {
    let c = unimodal_convolution_check(&critical(-2.0), 10, 2000).unwrap();
    outcome(
        c.passes && c.is_unimodal,
        format!("max P|x| {:.6}, mass {:.15}", c.max_ratio, c.mass),
    )
}

fn dyadic_search() -> Outcome {
    let s = dyadic_eta_search(&critical(-2.0), &EnvironmentLaw::Gaussian, 0.5, 6, 2000, 101).unwrap();
    outcome(
        s.inequality_verified && s.second_moment_ok,
        format!(
            "n0={} p={:.4} verify={:.4}±{:.4} E[W^2]={:.4} ceiling={:.4}",
            s.n0, s.p_eta, s.verify_p_eta, s.verify_stderr, s.second_moment.mean, s.second_moment_ceiling
        ),
    )
}

fn a_n_trend() -> Outcome {
    let law = critical(-2.0);
    let rates: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&n| a_n_probability(&law, n).unwrap().rate)
        .collect();
    let pass = rates.windows(2).all(|w| w[1] > w[0]) && rates.iter().all(|r| *r < 0.0);
    outcome(pass, format!("rates {rates:.5?}"))
}

fn jensen_sign() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let cases = [
        (critical(-2.0), 0.5, 32, 48),
        (critical(-3.0), 1.5, 32, 48),
        (IncrementLaw::nearest_neighbor(0.0).unwrap(), 0.5, 32, 48),
    ];
    for (law, beta, n, m) in cases {
        let g = free_energy_gap(&config(law, EnvironmentLaw::Gaussian, beta, n, m, 111), 200).unwrap();
        pass &= g.p_hat <= 3.0 * g.stderr;
    }
    let crit = free_energy_gap(&config(critical(-2.0), EnvironmentLaw::Gaussian, 1.0, 64, 96, 121), 200).unwrap();
    let nn = free_energy_gap(
        &config(IncrementLaw::nearest_neighbor(0.0).unwrap(), EnvironmentLaw::Gaussian, 1.0, 64, 96, 121),
        200,
    )
    .unwrap();
    pass &= crit.p_hat <= 3.0 * crit.stderr && nn.p_hat <= 3.0 * nn.stderr;
    let pooled = (crit.stderr.powi(2) + nn.stderr.powi(2)).sqrt();
    let gap = nn.p_hat.abs() - crit.p_hat.abs();
    pass &= gap >= 3.0 * pooled;
    detail.push(format!(
        "critical {:.4}±{:.4}, nearest-neighbour {:.4}±{:.4}",
        crit.p_hat, crit.stderr, nn.p_hat, nn.stderr
    ));
    outcome(pass, detail.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 12] = [
        ("martingale identity", martingale, Duration::from_secs(1)),
        ("normalization", normalization, Duration::from_secs(60)),
        ("brute-force equivalence", brute_force, Duration::from_secs(600)),
        ("exponential-moment limit", lemma_a1, Duration::from_secs(1)),
        ("entropy dichotomy", entropy_dichotomy, Duration::from_secs(60)),
        ("LLN slope", lln_slope, Duration::from_secs(60)),
        ("size-bias trend", size_bias_trend, Duration::from_secs(1800)),
        ("uniform identity", tau_identity, Duration::from_secs(5)),
        ("unimodal bound", unimodal_bound, Duration::from_secs(60)),
        ("dyadic eta search", dyadic_search, Duration::from_secs(600)),
        ("A_N rate trend", a_n_trend, Duration::from_secs(600)),
        ("Jensen sign", jensen_sign, Duration::from_secs(1800)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {} ({:.2}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
