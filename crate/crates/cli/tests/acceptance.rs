//! Acceptance checks for the vine-copula classifier, one line per criterion.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). Every criterion
//! prints `criterion N: PASS|FAIL (...)`; the process exits successfully
//! once all checks have run so that their outcomes can be compared side by
//! side. Set `ACCEPTANCE_STRICT=1` to turn any failure into a nonzero exit.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use vineclass::bicop::{tau_to_param, Bicop, Direction, Family};
use vineclass::classifier::{
    auc, evaluate, fit_class_vine, per_class_brier, per_class_nll, posterior_from_log, ClassifierConfig, RiskGroup,
    RiskPolicy,
};
use vineclass::data::{Dataset, Schema, VariableSpec};
use vineclass::diagnostics::bootstrap_bands;
use vineclass::margins::{MarginMethod, MarginModel};
use vineclass::numeric::norm_quantile;
use vineclass::numeric::quadrature::integrate;
use vineclass::rank::kendall_tau;
use vineclass::rng::{open01, stream};
use vineclass::simulation::{benchmark_run, BenchmarkConfig, CopulaMode, Variant};
use vineclass::vine::{VineFitOptions, VineModel, VineStructure};

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

fn all_copulas(tau: f64) -> Vec<Bicop> {
    let mut out = vec![Bicop::independence()];
    for f in Family::ALL.into_iter().skip(1) {
        for &rot in f.rotations() {
            let t = if rot == 90 || rot == 270 { -tau } else { tau };
            out.push(Bicop::new(f, rot, tau_to_param(f, rot, t).unwrap()).unwrap());
        }
    }
    out
}

/// Worst violation of each property for one copula.
#[derive(Default)]
struct BicopCheck {
    frechet: f64,
    hfunc: f64,
    mass: f64,
    tau: f64,
}

fn check_bicop(b: &Bicop, seed: u64) -> BicopCheck {
    let mut c = BicopCheck::default();
    for i in 0..=20 {
        for j in 0..=20 {
            let (u, v) = (i as f64 / 20.0, j as f64 / 20.0);
            let cdf = b.cdf(u, v);
            let lo = (u + v - 1.0).max(0.0);
            let hi = u.min(v);
            c.frechet = c.frechet.max(lo - cdf).max(cdf - hi);
        }
    }
    let step = 1e-5;
    for i in 1..20 {
        for j in 1..20 {
            let (u, v) = (i as f64 / 20.0, j as f64 / 20.0);
            let fd_v = (b.cdf(u, v + step) - b.cdf(u, v - step)) / (2.0 * step);
            let fd_u = (b.cdf(u + step, v) - b.cdf(u - step, v)) / (2.0 * step);
            c.hfunc = c
                .hfunc
                .max((b.hfunc(u, v, Direction::OneGivenTwo) - fd_v).abs())
                .max((b.hfunc(u, v, Direction::TwoGivenOne) - fd_u).abs());
        }
    }
    let total = integrate(
        |u| integrate(|v| b.pdf(u, v), 0.0, 1.0, 1e-10, 1e-9),
        0.0,
        1.0,
        1e-8,
        1e-7,
    );
    c.mass = (total - 1.0).abs();
    let (u, v): (Vec<f64>, Vec<f64>) = b.sample(100_000, seed).unwrap().into_iter().unzip();
    c.tau = (kendall_tau(&u, &v).unwrap() - b.tau()).abs();
    c
}

fn criterion_1() -> Outcome {
    let cases: Vec<(f64, Bicop)> = [0.3, 0.5, 0.75]
        .into_iter()
        .flat_map(|t| all_copulas(t).into_iter().map(move |b| (t, b)))
        .collect();
    let checks: Vec<BicopCheck> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (_, b))| check_bicop(b, 1000 + i as u64))
        .collect();
    let mut failures = Vec::new();
    let mut worst = BicopCheck::default();
    for ((tau, b), c) in cases.iter().zip(&checks) {
        if c.frechet > 1e-12 || c.hfunc > 1e-5 || c.mass > 1e-3 || c.tau > 0.01 {
            failures.push(format!("{}@{tau}", b.label()));
        }
        worst.frechet = worst.frechet.max(c.frechet);
        worst.hfunc = worst.hfunc.max(c.hfunc);
        worst.mass = worst.mass.max(c.mass);
        worst.tau = worst.tau.max(c.tau);
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} copulas; worst frechet {:.1e}, h-function {:.1e}, mass {:.1e}, tau {:.4}{}",
            cases.len(),
            worst.frechet,
            worst.hfunc,
            worst.mass,
            worst.tau,
            if failures.is_empty() { String::new() } else { format!("; failing {}", failures.join(" ")) }
        ),
    )
}

fn cvine3() -> VineStructure {
    VineStructure::from_node_pairs(3, &[vec![(0, 1), (0, 2)], vec![(0, 1)]]).unwrap()
}

fn criterion_2() -> Outcome {
    let margins = vec![
        MarginModel::ordinal_from_probs(vec![0.2, 0.5, 0.3]),
        MarginModel::ordinal_from_probs(vec![0.6, 0.3, 0.1]),
        MarginModel::ordinal_from_probs(vec![0.3, 0.3, 0.4]),
    ];
    let copulas = vec![
        vec![
            Bicop::new(Family::Gumbel, 0, vec![2.0]).unwrap(),
            Bicop::new(Family::Clayton, 90, vec![1.5]).unwrap(),
        ],
        vec![Bicop::new(Family::Frank, 0, vec![4.0]).unwrap()],
    ];
    let ordinal = VineModel::from_parts(cvine3(), copulas, margins, 2).unwrap();
    let mut cells = 0.0;
    for a in 1..=3 {
        for b in 1..=3 {
            for c in 1..=3 {
                cells += ordinal.log_density(&[a as f64, b as f64, c as f64]).exp();
            }
        }
    }

    // Standard normal margins: a kernel margin with one centre at 0 and unit bandwidth.
    let normal = MarginModel::KernelContinuous {
        centers: vec![0.0],
        bandwidth: 1.0,
        min: 0.0,
        max: 0.0,
    };
    let gauss = |r: f64| Bicop::new(Family::Gaussian, 0, vec![r]).unwrap();
    let continuous = VineModel::from_parts(
        cvine3(),
        vec![vec![gauss(0.6), gauss(-0.4)], vec![gauss(0.3)]],
        vec![normal.clone(), normal.clone(), normal],
        2,
    )
    .unwrap();
    // Composite Simpson rule on [-8, 8]^3.
    let m = 96;
    let (a, b) = (-8.0, 8.0);
    let h = (b - a) / m as f64;
    let w = |i: usize| if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    let volume: f64 = (0..=m)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..=m {
                for k in 0..=m {
                    let x = [a + i as f64 * h, a + j as f64 * h, a + k as f64 * h];
                    s += w(i) * w(j) * w(k) * continuous.log_density(&x).exp();
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * (h / 3.0).powi(3);
    outcome(
        (cells - 1.0).abs() <= 1e-6 && (volume - 1.0).abs() <= 1e-2,
        format!("ordinal cell sum {cells:.12}, continuous integral {volume:.6}"),
    )
}

fn criterion_3() -> Outcome {
    let mut r = stream(3, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let k = 2 + (open01(&mut r) * 4.0) as usize;
        let raw: Vec<f64> = (0..k).map(|_| open01(&mut r)).collect();
        let total: f64 = raw.iter().sum();
        let priors: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let logs: Vec<f64> = (0..k).map(|_| (open01(&mut r) - 0.5) * 400.0).collect();
        let post = posterior_from_log(&priors, &logs);
        worst = worst.max((post.iter().sum::<f64>() - 1.0).abs());
    }
    let worked = posterior_from_log(&[0.2, 0.8], &[2f64.ln(), 1f64.ln()]);
    let err = (worked[0] - 1.0 / 3.0).abs();
    outcome(
        worst <= 1e-12 && err <= 1e-12,
        format!("max |sum - 1| {worst:.1e}; worked example {:.15}", worked[0]),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, target) in [(Variant::Continuous, 82.88), (Variant::Mixed, 111.45)] {
        let cfg = BenchmarkConfig {
            variant,
            modes: vec![CopulaMode::Oracle],
            grid_points: 0,
            ..BenchmarkConfig::default()
        };
        let out = benchmark_run(&cfg).unwrap();
        let mut wins = 0;
        let mut copula = Vec::new();
        for &s in &cfg.seeds {
            let c = out.value(s, "copula", "oracle", "test", "nll_sum").unwrap();
            let l = out.value(s, "logistic", "weighted", "test", "nll_sum").unwrap();
            wins += usize::from(c < l);
            copula.push(c);
        }
        let med = median(copula);
        let ok = wins >= 18 && (med - target).abs() <= 0.3 * target;
        pass &= ok;
        parts.push(format!(
            "{}: wins {wins}/{}, median copula nll {med:.2} vs {target}",
            variant.name(),
            cfg.seeds.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn continuous_dataset(cols: Vec<Vec<f64>>) -> Dataset {
    let specs = (0..cols.len()).map(|j| VariableSpec::continuous(&format!("x{j}"))).collect();
    Dataset::new(Schema::new(specs).unwrap(), cols, None, None).unwrap()
}

fn criterion_5() -> Outcome {
    let config = ClassifierConfig {
        margins: MarginMethod::Empirical,
        vine: VineFitOptions::default(),
        ..ClassifierConfig::default()
    };
    let independent: Vec<bool> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = stream(seed, 500);
            let cols = (0..3).map(|_| (0..500).map(|_| open01(&mut r)).collect()).collect();
            fit_class_vine(&continuous_dataset(cols), &config).unwrap().truncation_level() == 0
        })
        .collect();
    let gumbel = Bicop::new(Family::Gumbel, 0, tau_to_param(Family::Gumbel, 0, 0.6).unwrap()).unwrap();
    let recovered: Vec<bool> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = stream(seed, 501);
            let mut cols = vec![Vec::new(); 3];
            for _ in 0..500 {
                let u0 = open01(&mut r);
                let u1 = gumbel.hinv(open01(&mut r), u0, Direction::TwoGivenOne).unwrap();
                let u2 = gumbel.hinv(open01(&mut r), u0, Direction::TwoGivenOne).unwrap();
                cols[0].push(u0);
                cols[1].push(u1);
                cols[2].push(u2);
            }
            let v = fit_class_vine(&continuous_dataset(cols), &config).unwrap();
            let edges_ok = v.structure().trees()[0].iter().enumerate().all(|(e, spec)| {
                let (a, b) = spec.conditioned;
                (a == 0 || b == 0) && (v.bicop(0, e).tau() - 0.6).abs() <= 0.08
            });
            v.truncation_level() <= 1 && edges_ok
        })
        .collect();
    let n_indep = independent.iter().filter(|&&b| b).count();
    let n_rec = recovered.iter().filter(|&&b| b).count();
    outcome(
        n_indep >= 18 && n_rec >= 16,
        format!("all-independence {n_indep}/20 (need 18); Gumbel recovery {n_rec}/20 (need 16)"),
    )
}

fn criterion_6() -> Outcome {
    let p = RiskPolicy::new(0.25).unwrap();
    let worked = p.group(0.95) == RiskGroup::High && p.group(0.10) == RiskGroup::Low && p.group(0.60) == RiskGroup::Moderate;
    let alphas = [0.45, 0.35, 0.25, 0.2, 0.15, 0.1, 0.05, 0.01];
    let mut r = stream(6, 0);
    let mut partition = true;
    let mut monotone = true;
    for _ in 0..500 {
        let probs: Vec<f64> = (0..50).map(|_| open01(&mut r)).collect();
        let mut last_low = usize::MAX;
        for &a in &alphas {
            let policy = RiskPolicy::new(a).unwrap();
            let counts = RiskGroup::ALL.map(|g| probs.iter().filter(|&&x| policy.group(x) == g).count());
            partition &= counts.iter().sum::<usize>() == probs.len();
            monotone &= counts[0] <= last_low;
            last_low = counts[0];
        }
    }
    outcome(
        worked && partition && monotone,
        format!("worked cases {worked}, partition {partition}, low group nonincreasing {monotone}"),
    )
}

/// Gaussian-copula pairs whose correlation depends on a three-level
/// conditioner; the true conditional Spearman's rho is (6/pi) asin(r/2).
const COVERAGE_RHO: [f64; 3] = [0.2, 0.5, 0.8];

fn conditional_sample(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = stream(seed, 700);
    let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let level = ((open01(&mut r) * 3.0) as usize).min(2);
        let rho = COVERAGE_RHO[level];
        let a = norm_quantile(open01(&mut r));
        let b = norm_quantile(open01(&mut r));
        x.push(a);
        y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        z.push(level as f64 + 1.0);
    }
    (x, y, z)
}

fn criterion_7() -> Outcome {
    let truth: Vec<f64> = COVERAGE_RHO
        .iter()
        .map(|r| 6.0 / std::f64::consts::PI * (r / 2.0).asin())
        .collect();
    let hits: Vec<(usize, usize)> = (0..200u64)
        .into_par_iter()
        .map(|d| {
            let (x, y, z) = conditional_sample(d, 600);
            let bands = bootstrap_bands(&x, &y, &z, 3, 1000, 0.90, d).unwrap();
            let mut covered = 0;
            let mut total = 0;
            for c in &bands.categories {
                if let (Some(lo), Some(hi)) = (c.lower, c.upper) {
                    total += 1;
                    let t = truth[c.category as usize - 1];
                    covered += usize::from(lo <= t && t <= hi);
                }
            }
            (covered, total)
        })
        .collect();
    let covered: usize = hits.iter().map(|h| h.0).sum();
    let total: usize = hits.iter().map(|h| h.1).sum();
    let rate = covered as f64 / total as f64;
    outcome(
        (rate - 0.90).abs() <= 0.05,
        format!("{covered}/{total} bands cover the truth ({:.1}%)", 100.0 * rate),
    )
}

fn criterion_8() -> Outcome {
    let classes = [0, 1];
    let labels: Vec<u32> = (0..40).map(|i| u32::from(i % 3 == 0)).collect();
    let perfect: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| if l == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
        .collect();
    let nll_perfect = per_class_nll(&perfect, &labels, &classes).unwrap();
    let perfect_ok = nll_perfect.iter().all(|v| *v == Some(0.0));
    let half = vec![vec![0.5, 0.5]; labels.len()];
    let brier = per_class_brier(&half, &labels, &classes).unwrap();
    let brier_ok = brier.iter().all(|v| *v == Some(0.25));
    let mut r = stream(8, 0);
    let probs: Vec<Vec<f64>> = labels
        .iter()
        .map(|_| {
            let p = open01(&mut r);
            vec![1.0 - p, p]
        })
        .collect();
    let e = evaluate(&probs, &labels, &classes).unwrap();
    let weighted: f64 = e.per_class.iter().map(|c| c.n as f64 * c.nll.unwrap()).sum();
    let combo_err = (e.nll_sum - weighted).abs().max((e.nll_mean - weighted / e.n as f64).abs());
    let scores: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| f64::from(l) * 10.0 + i as f64 * 0.01).collect();
    let a = auc(&scores, &labels, 1).unwrap();
    outcome(
        perfect_ok && brier_ok && combo_err <= 1e-12 && a == 1.0,
        format!("perfect nll {perfect_ok}, constant Brier {brier_ok}, combination error {combo_err:.1e}, AUC {a}"),
    )
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vineclass"))
        .current_dir(dir)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn write_conditional_csv(path: &Path) {
    let (x, y, z) = conditional_sample(99, 300);
    let mut text = String::from("x,y,z\n");
    for i in 0..x.len() {
        text.push_str(&format!("{},{},{}\n", x[i], y[i], z[i]));
    }
    std::fs::write(path, text).unwrap();
    std::fs::write(
        path.with_extension("schema.json"),
        r#"{"variables":[{"name":"x","kind":"continuous"},{"name":"y","kind":"continuous"},{"name":"z","kind":"ordinal","levels":3}]}"#,
    )
    .unwrap();
}

fn determinism_run(dir: &Path, threads: usize) -> Result<(), String> {
    write_conditional_csv(&dir.join("cond.csv"));
    run_cli(dir, threads, &["simulate", "--variant", "mixed", "--n", "150", "--seed", "5", "--out", "sim.csv"])?;
    run_cli(
        dir,
        threads,
        &["fit", "--data", "sim.csv", "--schema", "sim.schema.json", "--out", "model.json", "--report", "edges.csv", "--seed", "2"],
    )?;
    run_cli(
        dir,
        threads,
        &[
            "diagnose", "--data", "cond.csv", "--schema", "cond.schema.json", "--seed", "4", "--x", "x", "--y", "y", "--z", "z",
            "--replicates", "300", "--out", "diag",
        ],
    )?;
    run_cli(
        dir,
        threads,
        &[
            "diagnose", "--data", "sim.csv", "--schema", "sim.schema.json", "--seed", "4", "--class", "1", "--scores", "x1,x2",
            "--model", "model.json", "--out", "diag_sim",
        ],
    )?;
    run_cli(
        dir,
        threads,
        &[
            "benchmark", "--variant", "mixed", "--seeds", "1-4", "--n-train", "150", "--n-test", "100", "--grid-points", "12",
            "--out", "bench.csv",
        ],
    )
}

fn list_files(dir: &Path, prefix: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            list_files(&path, prefix, out);
        } else {
            out.push(path.strip_prefix(prefix).unwrap().to_path_buf());
        }
    }
}

fn criterion_9() -> Outcome {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    if let Err(e) = determinism_run(one.path(), 1).and_then(|_| determinism_run(four.path(), 4)) {
        return outcome(false, e);
    }
    let mut files = Vec::new();
    list_files(one.path(), one.path(), &mut files);
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(one.path().join(f)).ok() != std::fs::read(four.path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && files.len() >= 10,
        if differing.is_empty() {
            format!("{} output files identical at 1 and 4 threads", files.len())
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {n}: {} ({}; {:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{}/9 criteria passed", 9 - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
