//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Set QPOWER_ACCEPT=1,3,10 to run a subset
//! (criterion 12 then covers only the runs that happened).

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use qpower_core::dgauss::{
    check_subgaussian, gaussian_state_closeness, lattice_gaussian_sum, meets_subgaussian_hypothesis,
    variant_tv_distance, DiscreteGaussianSpec, PmfTable,
};
use qpower_core::eigensolver::{subspace_tomography, StepTomography, SubspaceConfig};
use qpower_core::harness::runners::{random_projector, tomography_state};
use qpower_core::harness::{run_experiment_with, ExperimentConfig, RunOptions, RunOutcome};
use qpower_core::phase::subgpe;
use qpower_core::rng::labeled_stream;
use qpower_core::stats::{binomial_slack, rate_at_most};
use qpower_core::tomography::{
    basis_sample_count, basis_tomography, reference_from_magnitudes, refined_tomography, single_sample_estimator,
    unbiased_tomography, Branch,
};
use qpower_core::{Counter, Field, QueryLedger, C64};

const SEED: u64 = 20_240_601;

struct Ctx {
    root: PathBuf,
    /// (run label, byte-identical on repeat)
    repeats: RefCell<Vec<(String, bool)>>,
}

type Verdict = (bool, String);

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text, &[]).expect("acceptance config is valid")
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

impl Ctx {
    /// Runs `cfg`, then repeats it with the same seed on a different worker
    /// count and compares every CSV. With `prefix` the repeat covers only
    /// the first trials, and per-trial CSVs are compared line by line on
    /// that prefix; trials draw from independent streams, so a prefix
    /// repeat exercises the same per-trial determinism.
    fn run(&self, label: &str, mut cfg: ExperimentConfig, prefix: Option<u64>) -> RunOutcome {
        let first = self.root.join(label).join("first");
        let second = self.root.join(label).join("repeat");
        cfg.out = Some(first.clone());
        let out = run_experiment_with(
            &cfg,
            &RunOptions {
                workers: Some(1),
                stop_after: None,
            },
        )
        .expect("run");
        let mut again = cfg.clone();
        again.out = Some(second.clone());
        if let Some(p) = prefix {
            again.trials = p.min(cfg.trials);
        }
        run_experiment_with(
            &again,
            &RunOptions {
                workers: Some(3),
                stop_after: None,
            },
        )
        .expect("repeat");
        let mut same = true;
        for name in csv_files(&second) {
            let a = fs::read_to_string(first.join(&name)).unwrap_or_default();
            let b = fs::read_to_string(second.join(&name)).unwrap();
            same &= match prefix {
                None => a == b,
                Some(_) => {
                    let n = b.lines().count();
                    a.lines().take(n).eq(b.lines())
                }
            };
        }
        same &= prefix.is_some() || csv_files(&first) == csv_files(&second);
        self.repeats.borrow_mut().push((label.to_string(), same));
        out
    }

    /// Determinism for library-level tables: build twice, compare.
    fn table(&self, label: &str, build: impl Fn() -> String) -> String {
        let a = build();
        let same = a == build();
        self.repeats.borrow_mut().push((label.to_string(), same));
        a
    }
}

fn row(out: &RunOutcome, d: usize) -> &serde_json::Value {
    out.summary["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["d"] == d)
        .expect("row for d")
}

fn c1(ctx: &Ctx) -> Verdict {
    let cfg = config(&format!(
        r#"{{"experiment":"hard-instance","d":1000,"trials":200,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c1-hard-instance", cfg, Some(20));
    let claims = row(&out, 1000)["checks"]["claims"].as_array().unwrap().clone();
    let detail = claims
        .iter()
        .map(|c| format!("{} {}/{}", c["name"].as_str().unwrap(), c["holds"], c["trials"]))
        .collect::<Vec<_>>()
        .join(", ");
    (out.pass, detail)
}

fn c2(ctx: &Ctx) -> Verdict {
    let cfg = config(&format!(
        r#"{{"experiment":"npm","d":300,"eps":0.1,"noise":"compliant","trials":200,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c2-npm", cfg, None);
    let r = row(&out, 300);
    let violations = r["checks"]["audit_violations_in_successes"].as_f64().unwrap();
    (
        r["pass"] == true && violations == 0.0,
        format!(
            "success {} (CP99 upper {:.4}), audit violations {violations}",
            r["success_rate"],
            r["ci_high"].as_f64().unwrap()
        ),
    )
}

fn c3(ctx: &Ctx) -> Verdict {
    let cfg = config(r#"{"experiment":"gpe-calibrate","exact":true,"delta":0.01}"#);
    let out = ctx.run("c3-gpe-exact", cfg, None);
    let tvs: Vec<String> = out.summary["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| format!("a={} tv={:.2e}", r["a"], r["tv"].as_f64().unwrap()))
        .collect();
    (out.pass, tvs.join(", "))
}

fn c4(ctx: &Ctx) -> Verdict {
    let (eps, tau, a, n) = (0.05, 0.01, 0.3, 100_000u64);
    let table = ctx.table("c4-subgpe-tails", || {
        let mut rng = labeled_stream(SEED, "acceptance/subgpe", 0);
        let mut ledger = QueryLedger::compact();
        let errs: Vec<f64> = (0..n)
            .map(|_| (subgpe(a, eps, tau, &mut rng, &mut ledger, "subgpe").unwrap() - a).abs())
            .collect();
        let mut csv = String::from("t,empirical,bound,slack\n");
        for t in [1.0f64, 2.0, 3.0] {
            let hits = errs.iter().filter(|&&e| e > t * eps).count() as f64 / n as f64;
            let bound = 2.0 * tau.exp() * (-t * t / 2.0).exp() + tau;
            let slack = binomial_slack(bound.min(1.0), n);
            csv.push_str(&format!("{t},{hits},{bound},{slack}\n"));
        }
        csv
    });
    let mut ok = true;
    let mut detail = Vec::new();
    for line in table.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        ok &= v[1] <= v[2] + v[3];
        detail.push(format!("t={} {:.4}<={:.4}", v[0], v[1], v[2] + v[3]));
    }
    (ok, detail.join(", "))
}

fn c5(ctx: &Ctx) -> Verdict {
    let (d, eps, delta) = (8usize, 0.2, 0.1);
    let cfg = config(&format!(
        r#"{{"experiment":"tomography","d":{d},"eps":{eps},"delta":{delta},"mode":"unbiased","trials":500,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c5-tomography", cfg, None);
    let r = row(&out, d);
    let failures = 500 - r["successes"].as_u64().unwrap();
    let fail_ok = rate_at_most(failures, 500, delta);

    // bias of the single-sample estimator against Re/Im(ψ_j ψ̄_j*)/|ψ̄_j|
    let psi = tomography_state(SEED, d);
    let mut rng = labeled_stream(SEED, "acceptance/bias", 0);
    let mag = basis_tomography(
        &psi,
        basis_sample_count(d, 1.0 / (d as f64).sqrt(), delta / 2.0),
        &mut rng,
    )
    .unwrap();
    let psi_bar = reference_from_magnitudes(&mag);
    let samples = 100_000;
    let mut worst_z = 0.0f64;
    for branch in [Branch::Real, Branch::Imag] {
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..samples {
            let x = single_sample_estimator(&psi, &psi_bar, branch, &mut rng);
            for j in 0..d {
                sum[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        for j in 0..d {
            let z = psi[j] * psi_bar[j].conj() / psi_bar[j].norm();
            let target = if branch == Branch::Real { z.re } else { z.im };
            let mean = sum[j] / samples as f64;
            let var = sq[j] / samples as f64 - mean * mean;
            let se = (var / samples as f64).sqrt();
            worst_z = worst_z.max((mean - target).abs() / se);
        }
    }
    (
        fail_ok && worst_z <= 4.0,
        format!("failures {failures}/500, worst bias {worst_z:.2} standard errors"),
    )
}

fn c6(ctx: &Ctx) -> Verdict {
    let d = 8;
    let table = ctx.table("c6-refinement", || {
        let psi = tomography_state(SEED, d);
        let mut csv = String::from("method,eps,calls\n");
        for eps in [0.1, 0.05] {
            let mut rng = labeled_stream(SEED, "acceptance/refinement", 0);
            let mut ledger = QueryLedger::compact();
            refined_tomography(&psi, eps, 0.1, d, &mut rng, &mut ledger).unwrap();
            csv.push_str(&format!("refined,{eps},{}\n", ledger.total(Counter::ControlledUCalls)));
            let mut ledger = QueryLedger::compact();
            unbiased_tomography(&psi, eps, 0.1, d, &mut rng, &mut ledger).unwrap();
            csv.push_str(&format!("unbiased,{eps},{}\n", ledger.total(Counter::ControlledUCalls)));
        }
        csv
    });
    let get = |m: &str, e: &str| -> f64 {
        table
            .lines()
            .find(|l| l.starts_with(&format!("{m},{e},")))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    let refined = get("refined", "0.05") / get("refined", "0.1");
    let unbiased = get("unbiased", "0.05") / get("unbiased", "0.1");
    (
        (1.4..=2.6).contains(&refined) && (3.0..=5.0).contains(&unbiased),
        format!("refined ratio {refined:.3}, unbiased ratio {unbiased:.3}"),
    )
}

fn c7(ctx: &Ctx) -> Verdict {
    let (d, q) = (64usize, 3usize);
    let cfg = config(&format!(
        r#"{{"experiment":"subspace","d":{d},"q":{q},"eps":0.2,"delta":0.1,"trials":100,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c7-subspace", cfg, Some(20));
    let r = row(&out, d);
    let failures = 100 - r["successes"].as_u64().unwrap();
    let wedin = r["checks"]["wedin_violations"].as_f64().unwrap();

    // error-free tomography must give back Π itself
    let pi = random_projector(d, q, Field::Real, &mut labeled_stream(SEED, "projector", d as u64));
    let mut sc = SubspaceConfig::new(q, 0.1, 0.2, Field::Real).unwrap();
    sc.tomography = StepTomography::Exact;
    let mut rng = labeled_stream(SEED, "acceptance/exact-subspace", 0);
    let run = subspace_tomography(&pi, &sc, &mut rng, &mut QueryLedger::compact()).unwrap();
    let exact_err = run.projector_error(&pi);
    (
        rate_at_most(failures, 100, 0.1) && wedin == 0.0 && exact_err <= 1e-9,
        format!("failures {failures}/100, wedin violations {wedin}, exact-tomography error {exact_err:.1e}"),
    )
}

fn c8(ctx: &Ctx) -> Verdict {
    let cfg = config(&format!(
        r#"{{"experiment":"qnpm","d":[64,128,256],"eps":0.2,"trials":100,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c8-qnpm", cfg, Some(10));
    let r = row(&out, 128);
    let slope = out.summary["sweep"]["loglog_slope"].as_f64().unwrap();
    let monotone = out.summary["sweep"]["monotone_queries"] == true;
    (
        r["pass"] == true && monotone && (1.6..=1.9).contains(&slope),
        format!(
            "d=128 success {} (CP99 upper {:.4}), query slope {slope:.3}",
            r["success_rate"],
            r["ci_high"].as_f64().unwrap()
        ),
    )
}

fn c9(ctx: &Ctx) -> Verdict {
    let cases: [(usize, usize, Vec<f64>); 6] = [
        (16, 1, vec![0.9, 0.6]),
        (16, 2, vec![0.9, 0.6]),
        (24, 1, vec![-0.8, 0.5, 0.3]),
        (32, 3, vec![0.95, 0.8, 0.7, 0.4]),
        (32, 4, vec![0.9, 0.85, 0.8, 0.75, 0.5]),
        (48, 2, vec![0.7, -0.65, 0.45]),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (d, q, head)) in cases.iter().enumerate() {
        let mut spectrum = head.clone();
        spectrum.resize(*d, 0.1);
        let cfg = config(&format!(
            r#"{{"experiment":"lambda-q","q":{q},"spectrum":{},"delta":0.1,"trials":100,"seed":{SEED}}}"#,
            serde_json::to_string(&spectrum).unwrap()
        ));
        let out = ctx.run(&format!("c9-lambda-q-{i}"), cfg, None);
        let r = row(&out, *d);
        ok &= r["pass"] == true;
        detail.push(format!(
            "d={d} q={q} gamma={:.2}: {}",
            r["info"]["gamma"].as_f64().unwrap(),
            r["successes"]
        ));
    }
    (ok, detail.join("; "))
}

fn c10(ctx: &Ctx) -> Verdict {
    let cfg = config(&format!(
        r#"{{"experiment":"lower-bound","trials":20000,"seed":{SEED}}}"#
    ));
    let out = ctx.run("c10-lower-bound", cfg, None);
    let s = &out.summary;
    (
        out.pass,
        format!(
            "slope exact {:.4}, Monte-Carlo {:.3}, KL exact {}, curve within 3se {}, Pinsker {}",
            s["slope_exact"].as_f64().unwrap(),
            s["slope_empirical"].as_f64().unwrap_or(f64::NAN),
            s["kl_exact"],
            s["curve_within_3se"],
            s["pinsker_holds"]
        ),
    )
}

fn c11(ctx: &Ctx) -> Verdict {
    let table = ctx.table("c11-discrete-gaussian", || {
        let mut csv = String::from("check,params,value,limit,ok\n");
        // sub-Gaussian certificates at and above the width threshold
        for lattice in [0.5, 1.0, 2.0] {
            for tau in [0.01, 0.1, 0.5] {
                let s_min = lattice * ((12.0f64 / tau).log2() / std::f64::consts::PI).sqrt();
                for (factor, c) in [(1.0, 0.5), (1.5, 0.25), (3.0, 0.0)] {
                    let s = s_min * factor;
                    assert!(meets_subgaussian_hypothesis(s, lattice, tau));
                    let spec = DiscreteGaussianSpec::full(c * lattice, s).with_lattice(lattice);
                    let cert = check_subgaussian(&PmfTable::build(&spec).unwrap(), s, tau, None);
                    csv.push_str(&format!(
                        "subgaussian,lattice={lattice} tau={tau} s={s:.4} c={c},{},1e-9,{}\n",
                        cert.mgf_margin,
                        cert.valid()
                    ));
                }
            }
        }
        // variants are 4δe^τ close once N, L, R ≥ 10s√(2 ln(2/δ))
        for delta in [0.01, 0.05] {
            for s in [2.0, 5.0, 10.0] {
                for c in [0.0, 0.3] {
                    let span = 10.0 * s * (2.0 * (2.0f64 / delta).ln()).sqrt();
                    let n = 2 * (span / 2.0).ceil() as u64;
                    let full = DiscreteGaussianSpec::full(c, s);
                    let tr = DiscreteGaussianSpec::truncated(c, s, span, span);
                    let md = DiscreteGaussianSpec::modular(c, s, n);
                    let limit = 4.0 * delta * 0.1f64.exp();
                    for (name, a, b) in [("full-trunc", full, tr), ("full-mod", full, md), ("trunc-mod", tr, md)] {
                        let tv = variant_tv_distance(&a, &b).unwrap();
                        csv.push_str(&format!(
                            "variant-tv,{name} delta={delta} s={s} c={c},{tv},{limit},{}\n",
                            tv <= limit
                        ));
                    }
                }
            }
        }
        // Poisson summation
        for cc in [0.5, 1.0, 2.0] {
            for s in [1.0, 3.0, 8.0] {
                let lhs = lattice_gaussian_sum(s, cc);
                let rhs = s / cc * lattice_gaussian_sum(1.0 / s, 1.0 / cc);
                let gap = (lhs - rhs).abs();
                csv.push_str(&format!("poisson,C={cc} s={s},{gap},1e-10,{}\n", gap <= 1e-10));
            }
        }
        // truncated and modular states are 9δ close
        for delta in [0.01, 0.05, 0.1] {
            let s_min = 8.0 * (2.0 * (1.0f64 / delta).log2()).sqrt();
            for s in [s_min, 2.0 * s_min] {
                let n_min = 16.0 * s * (2.0 * (1.0f64 / delta).ln()).sqrt();
                let n = 2 * (n_min / 2.0).ceil() as u64;
                let nf = n as f64;
                for t in [0.0, nf / 16.0, nf / 8.0, -nf / 8.0] {
                    for (pname, phase) in [
                        ("flat", Box::new(|_: f64| C64::new(1.0, 0.0)) as Box<dyn Fn(f64) -> C64>),
                        ("chirp", Box::new(|y: f64| C64::from_polar(1.0, 0.37 * y * y + 1.3 * y))),
                    ] {
                        let close = gaussian_state_closeness(s, n, t, delta, &*phase).unwrap();
                        let limit = 9.0 * delta;
                        csv.push_str(&format!(
                            "state-closeness,delta={delta} s={s:.3} N={n} t={t} {pname},{},{limit},{}\n",
                            close.max(),
                            close.max() <= limit
                        ));
                    }
                }
            }
        }
        csv
    });
    let rows: Vec<&str> = table.lines().skip(1).collect();
    let failed: Vec<&str> = rows.iter().copied().filter(|l| l.ends_with(",false")).collect();
    (
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks", rows.len())
        } else {
            format!("{} of {} checks failed, first: {}", failed.len(), rows.len(), failed[0])
        },
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("QPOWER_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let want = |id: u32| selected.as_ref().is_none_or(|s| s.contains(&id));
    let tmp = tempfile::tempdir().expect("temp dir");
    let ctx = Ctx {
        root: tmp.path().to_path_buf(),
        repeats: RefCell::new(Vec::new()),
    };

    type Criterion = (u32, &'static str, u64, fn(&Ctx) -> Verdict);
    let criteria: [Criterion; 11] = [
        (1, "hard-instance spectral claims", 600, c1),
        (2, "classical noisy power method", 300, c2),
        (3, "Gaussian phase estimation exact TV", 60, c3),
        (4, "sub-Gaussian phase estimation tails", 120, c4),
        (5, "unbiased tomography", 300, c5),
        (6, "iterative refinement saving", 300, c6),
        (7, "projector process tomography", 900, c7),
        (8, "quantum noisy power method", 1800, c8),
        (9, "eigenvalue search", 300, c9),
        (10, "lower-bound distinguishing curve", 300, c10),
        (11, "discrete Gaussian suite", 120, c11),
    ];
    let mut all = true;
    for (id, name, limit, f) in criteria {
        if !want(id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f(&ctx);
        let took = start.elapsed();
        let pass = ok && took <= Duration::from_secs(limit);
        all &= pass;
        println!(
            "criterion {id:>2}: {} {name} [{:.1}s of {limit}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if want(12) {
        let repeats = ctx.repeats.borrow();
        let bad: Vec<&str> = repeats.iter().filter(|(_, ok)| !ok).map(|(l, _)| l.as_str()).collect();
        let pass = bad.is_empty() && !repeats.is_empty();
        all &= pass;
        println!(
            "criterion 12: {} determinism [{} runs repeated] {}",
            if pass { "PASS" } else { "FAIL" },
            repeats.len(),
            if bad.is_empty() {
                "all result CSVs byte-identical".to_string()
            } else {
                format!("differs: {}", bad.join(", "))
            }
        );
    }
    if !all {
        std::process::exit(1);
    }
}
