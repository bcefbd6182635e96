//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use tapa_core::attention::{check_gradient, gradient_case, FD_STEP};
use tapa_core::encodings::{
    max_form_discrepancy, shift_mismatches, AttentionConfig, RopeParams, TapaParams,
};
use tapa_core::experiments::{histogram_oracle, run_bias_histogram, HistogramSpec};
use tapa_core::theory::{
    gamma_bias, lemma1_check, lemma2_check, monte_carlo_rope_bias, theorem2_gap_check,
    theorem3_shrink_check, theorem4_decay_check, theorem5_variance_check, Admissibility, GapParams,
    SumParams,
};
use tapa_core::{Error, SamplerSpec, TheoryCheckReport};

const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn all_pass(reports: &[TheoryCheckReport]) -> Outcome {
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    match failed.first() {
        None => Ok(format!("{} checks", reports.len())),
        Some(r) => Err(format!(
            "{} of {} checks failed, first {} lhs={:e} rhs={:e} params={:?}",
            failed.len(),
            reports.len(),
            r.name,
            r.lhs,
            r.rhs,
            r.params
        )),
    }
}

fn c1() -> Outcome {
    let worst = max_form_discrepancy(SEED, 10_000).map_err(|e| e.to_string())?;
    if worst <= 1e-12 {
        Ok(format!("max |complex - expanded| = {worst:e}"))
    } else {
        Err(format!("max |complex - expanded| = {worst:e} > 1e-12"))
    }
}

fn c2() -> Outcome {
    let bad = shift_mismatches(SEED, 1000).map_err(|e| e.to_string())?;
    if bad == 0 {
        Ok("1000 shifts bitwise identical".into())
    } else {
        Err(format!("{bad} of 1000 shifts changed the score"))
    }
}

fn c3() -> Outcome {
    let mut reports = Vec::new();
    let mut inadmissible = 0;
    for theta0 in [1e-2, 1e-4, 1e-6, 1e-10] {
        for dim in [64, 128, 512, 2048] {
            for lambda in [2.0, 10.0, 1e3, 1e6] {
                for alpha in [0.1, 0.3, 0.5] {
                    let p = SumParams {
                        lambda,
                        theta0,
                        dim,
                        alpha,
                        eps0: 0.25,
                    };
                    match lemma1_check(&p) {
                        Ok((c, s)) => reports.extend([c, s]),
                        Err(Error::Precondition { .. }) => inadmissible += 1,
                        Err(e) => return Err(e.to_string()),
                    }
                    match lemma2_check(&p) {
                        Ok(r) => reports.push(r),
                        Err(Error::Precondition { .. }) => inadmissible += 1,
                        Err(e) => return Err(e.to_string()),
                    }
                }
            }
        }
    }
    all_pass(&reports).map(|s| format!("{s}, {inadmissible} inadmissible points skipped"))
}

fn c4() -> Outcome {
    let mut reports = Vec::new();
    let mut notes = Vec::new();
    for mu0 in [1.0, -1.0] {
        for nu0 in [0.0, 0.5] {
            let strict = GapParams {
                lambda_near: 10.0,
                lambda_far: 1e31,
                mu0,
                nu0,
                theta0: 1e-30,
                dim: 4096,
            };
            let r = match theorem2_gap_check(&strict, Admissibility::Strict) {
                Err(Error::Precondition { condition, .. }) => {
                    notes.push(format!("mu0={mu0} nu0={nu0} strict: {condition} fails"));
                    theorem2_gap_check(&strict, Admissibility::Empirical)
                }
                other => other,
            };
            reports.push(r.map_err(|e| e.to_string())?);
            let empirical = GapParams {
                lambda_far: 1e7,
                theta0: 1e-6,
                dim: 1024,
                ..strict
            };
            reports.push(
                theorem2_gap_check(&empirical, Admissibility::Empirical)
                    .map_err(|e| e.to_string())?,
            );
        }
    }
    let worst = reports
        .iter()
        .map(|r| r.margin)
        .fold(f64::INFINITY, f64::min);
    all_pass(&reports).map(|s| {
        let mut out = format!("{s}, smallest margin {worst:.4}");
        for n in notes {
            out.push_str(&format!("; {n}, checked with the empirical bound"));
        }
        out
    })
}

fn c5() -> Outcome {
    let g = GapParams {
        lambda_near: 10.0,
        lambda_far: 1e4,
        mu0: 1.0,
        nu0: 0.0,
        theta0: 2e-6,
        dim: 128,
    };
    let out = theorem3_shrink_check(&g, 0.05).map_err(|e| e.to_string())?;
    let last = out.trace.last().ok_or("empty trace")?;
    let detail = format!(
        "step {} theta0={:e} D={} |delta|={:.4}",
        last.step, last.theta0, last.dim, last.abs_delta
    );
    if out.report.pass && out.trace.len() <= 40 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c6() -> Outcome {
    let t = TapaParams::quadratic(8, 0.5, 0.1).map_err(|e| e.to_string())?;
    let spec = SamplerSpec::new(8, 1.0, 0.0, 1.0, SEED).map_err(|e| e.to_string())?;
    let distances: Vec<f64> = (1..=1024).map(f64::from).collect();
    let out = theorem4_decay_check(&t, &spec, &distances, 1_000_000).map_err(|e| e.to_string())?;
    let slope = out.slope.ok_or("slope not fitted")?;
    let summary = all_pass(&out.reports)?;
    if (-0.6..=-0.2).contains(&slope) {
        Ok(format!("{summary}, slope {slope:.4}"))
    } else {
        Err(format!("slope {slope:.4} outside [-0.6, -0.2]"))
    }
}

fn c7() -> Outcome {
    let t = TapaParams::quadratic(8, 0.5, 0.1).map_err(|e| e.to_string())?;
    let spec = SamplerSpec::new(8, 0.0, 0.0, 1.0, SEED).map_err(|e| e.to_string())?;
    let r = theorem5_variance_check(&t, &spec, 1e4, 1_000_000).map_err(|e| e.to_string())?;
    let detail = format!("variance {:.4} vs floor {:.4}", r.lhs, r.rhs);
    if r.pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let c = check_gradient(&gradient_case(SEED, i), FD_STEP).map_err(|e| e.to_string())?;
        worst = worst.max(c.max_rel_err);
    }
    if worst <= 1e-5 {
        Ok(format!("max relative error {worst:e}"))
    } else {
        Err(format!("max relative error {worst:e} > 1e-5"))
    }
}

fn c9() -> Outcome {
    let hist = |encoding: AttentionConfig| -> Result<(f64, f64, f64), Error> {
        let spec = HistogramSpec {
            short_range: (0, 100),
            long_range: (10_000, 10_100),
            n_pairs: 10_000,
            bins: 50,
            sampler: SamplerSpec::new(128, 1.0, 0.0, 1.0, SEED)?,
            encoding,
        };
        let h = run_bias_histogram(&spec)?;
        Ok((h.mean, h.ci95, histogram_oracle(&spec)?))
    };
    let rope = RopeParams::new(128, 2e-6).map_err(|e| e.to_string())?;
    let tapa = TapaParams::quadratic(128, 0.5, 0.1).map_err(|e| e.to_string())?;
    let (r_mean, r_ci, r_oracle) = hist(AttentionConfig::Rope(rope)).map_err(|e| e.to_string())?;
    let (t_mean, _, _) = hist(AttentionConfig::Tapa(tapa)).map_err(|e| e.to_string())?;
    let detail = format!(
        "rope mean {r_mean:.4} (oracle {r_oracle:.4}, ci {r_ci:.4}), tapa mean {t_mean:.2e}"
    );
    if r_mean.abs() > 5.0 * t_mean.abs() && (r_mean - r_oracle).abs() <= 4.0 * r_ci {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10() -> Outcome {
    let mut reports = Vec::new();
    for dim in [64, 128] {
        for theta0 in [1e-2, 2e-6] {
            let p = RopeParams::new(dim, theta0).map_err(|e| e.to_string())?;
            let spec = SamplerSpec::new(dim, 1.0, 0.0, 1.0, SEED).map_err(|e| e.to_string())?;
            for lambda in [1.0, 10.0, 1000.0] {
                let stats =
                    monte_carlo_rope_bias(lambda, &spec, &p, 100_000).map_err(|e| e.to_string())?;
                let gamma = gamma_bias(lambda, 1.0, 0.0, &p).map_err(|e| e.to_string())?;
                reports.push(TheoryCheckReport::at_most(
                    "mc_gamma",
                    Default::default(),
                    (stats.mean - gamma).abs(),
                    4.0 * stats.ci95_half_width,
                ));
            }
        }
    }
    let summary = all_pass(&reports)?;
    let variance = |dim: usize| -> Result<f64, Error> {
        let p = RopeParams::new(dim, 2e-6)?;
        let spec = SamplerSpec::new(dim, 1.0, 0.0, 1.0, SEED)?;
        Ok(monte_carlo_rope_bias(10.0, &spec, &p, 1_000_000)?.variance)
    };
    let ratio =
        variance(256).map_err(|e| e.to_string())? / variance(128).map_err(|e| e.to_string())?;
    if (0.3..=0.7).contains(&ratio) {
        Ok(format!("{summary}, variance ratio {ratio:.4}"))
    } else {
        Err(format!("variance ratio {ratio:.4} outside [0.3, 0.7]"))
    }
}

fn run_verify(out: &Path, workers: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_tapa"))
        .args(["verify", "--workers", workers, "--seed", "11", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?
        .status;
    match status.code() {
        Some(0) => Ok(()),
        c => Err(format!("verify with {workers} workers exited {c:?}")),
    }
}

fn c11() -> Outcome {
    let a = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let b = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    run_verify(a.path(), "1")?;
    run_verify(b.path(), "4")?;
    let mut names: Vec<_> = fs::read_dir(a.path())
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    names.sort();
    for name in &names {
        let x = fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
    }
    Ok(format!(
        "{} files byte-identical across 1 and 4 workers",
        names.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("RoPE form equivalence", c1, Duration::from_secs(5)),
        ("shift invariance", c2, Duration::from_secs(1)),
        ("lemma bounds on default grid", c3, Duration::from_secs(30)),
        ("gap sign", c4, Duration::from_secs(120)),
        ("gap shrinkage", c5, Duration::from_secs(120)),
        ("TAPA decay", c6, Duration::from_secs(300)),
        ("TAPA variance floor", c7, Duration::from_secs(60)),
        ("gradient check", c8, Duration::from_secs(30)),
        ("bias histogram contrast", c9, Duration::from_secs(60)),
        ("Monte Carlo vs Gamma", c10, Duration::from_secs(120)),
        ("determinism", c11, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let over = took > *budget;
        let ok = result.is_ok() && !over;
        if !ok {
            failures += 1;
        }
        let detail = match &result {
            Ok(s) | Err(s) => s.as_str(),
        };
        println!(
            "criterion {:>2} {:<30} {} ({:.2}s{}) {}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if over {
                format!(", budget {}s exceeded", budget.as_secs())
            } else {
                String::new()
            },
            detail
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
