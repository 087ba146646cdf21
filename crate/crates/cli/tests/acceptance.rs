//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. A failing criterion is reported but
//! does not fail the run unless `OPG_ACCEPTANCE_STRICT=1`; a criterion that
//! panics or errors always fails the run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opg_core::baselines::{ncs_objective, NcsHyperparams, NcsState};
use opg_core::experiments::{lazy_identification, lazy_identification_heuristic, robustness_delta, time_methods};
use opg_core::mallows::{
    greedy_mle_ranking, local_kemenization, log_mallows_normalizer, mallows_log_likelihood, weighted_disagreement,
    MallowsParams,
};
use opg_core::metrics::{ek_error, TargetSet};
use opg_core::score_models::{pl_ranking_log_probability, ScoreFitConfig, ScoreModel, ScoreProblem};
use opg_core::synth::{generate, GraderModel, SynthConfig};
use opg_core::{fit, Dataset64, FitConfig64, GraderFeedback, GraderId, ItemId, Method, WeakRanking};
use opg_oracle as oracle;

/// Honest graders of the posters/reports-like datasets: whole-point grades
/// with noise sd 0.5 on the standardized quality scale.
const POSTERS_LIKE: GraderModel = GraderModel::Likert { eta: 4.0, bias_sd: 0.0 };

type Outcome = (bool, String);

fn ids(n: usize) -> Vec<ItemId> {
    (0..n).map(|k| ItemId::from(format!("i{k}").as_str())).collect()
}

/// Random weak ranking of `items`: shuffled, then cut at each gap with
/// probability one half.
fn random_weak<R: Rng>(items: &[usize], rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = items.to_vec();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
    for &i in &order[1..] {
        if rng.random_bool(0.5) {
            groups.push(vec![i]);
        } else {
            groups.last_mut().unwrap().push(i);
        }
    }
    groups
}

fn to_ranking(groups: &[Vec<usize>], names: &[ItemId]) -> WeakRanking {
    WeakRanking::new(groups.iter().map(|g| g.iter().map(|&i| names[i].clone()).collect()).collect()).unwrap()
}

fn random_subset<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all.sort_unstable();
    all
}

fn ordinal_dataset(n: usize, rankings: &[Vec<Vec<usize>>]) -> Dataset64 {
    let names = ids(n);
    let graders: Vec<GraderId> = (0..rankings.len()).map(|g| GraderId::from(format!("g{g}").as_str())).collect();
    let fb = graders.iter().zip(rankings).map(|(g, r)| GraderFeedback::from_ordinal(g.clone(), to_ranking(r, &names)).unwrap()).collect();
    Dataset64::new(names, graders, fb).unwrap()
}

fn c1_mallows_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 1..=6 {
        let names = ids(k);
        for eta in [0.1, 1.0, 3.0] {
            let z = log_mallows_normalizer::<f64>(eta, k).unwrap().exp();
            worst = worst.max((z - oracle::mallows_normalizer(eta, k)).abs() / oracle::mallows_normalizer(eta, k));
            for _ in 0..10 {
                let mut center: Vec<usize> = (0..k).collect();
                center.shuffle(&mut rng);
                let groups = random_weak(&(0..k).collect::<Vec<_>>(), &mut rng);
                let c = WeakRanking::from_order(center.iter().map(|&i| names[i].clone()).collect()).unwrap();
                let got: f64 = mallows_log_likelihood(&c, &to_ranking(&groups, &names), eta).unwrap();
                let want = oracle::mallows_log_likelihood(&center, &groups, eta);
                worst = worst.max(oracle::rel_err(got, want));
                cases += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (worst <= 1e-9 && secs < 10.0, format!("{cases} likelihoods + 18 normalizers, worst rel err {worst:.2e}, {secs:.2}s"))
}

/// Greedy ranking plus local Kemenization against the exhaustive optimum on
/// 200 random instances: (optimal count, worst cost ratio).
fn kemeny_trial(seed: u64, full: bool) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut optimal, mut worst_ratio, mut done) = (0, 1.0f64, 0);
    while done < 200 {
        let n = rng.random_range(2..=5);
        let n_graders = rng.random_range(1..=4);
        let rankings: Vec<Vec<Vec<usize>>> = (0..n_graders)
            .map(|_| {
                if full {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut rng);
                    order.into_iter().map(|i| vec![i]).collect()
                } else {
                    let k = rng.random_range(2..=n);
                    random_weak(&random_subset(n, k, &mut rng), &mut rng)
                }
            })
            .collect();
        let covered: HashSet<usize> = rankings.iter().flatten().flatten().copied().collect();
        if covered.len() < n {
            continue;
        }
        done += 1;
        let data = ordinal_dataset(n, &rankings);
        let params = MallowsParams::uniform();
        let r = local_kemenization(&greedy_mle_ranking(&data, &params).unwrap(), &data, &params).unwrap();
        let cost: f64 = weighted_disagreement(&r, &data, &params).unwrap();
        let weighted: Vec<oracle::WeightedRanking> = rankings.iter().map(|g| (1.0, g.clone())).collect();
        let (best, _) = oracle::kemeny(n, &weighted);
        if cost <= best + 1e-9 {
            optimal += 1;
        } else {
            if std::env::var("OPG_ACCEPTANCE_DEBUG").is_ok() {
                eprintln!("n={n} rankings={rankings:?} got {:?} cost {cost} best {best}", r.groups());
            }
            worst_ratio = worst_ratio.max(cost / best);
        }
    }
    (optimal, worst_ratio)
}

fn c2_kemeny() -> Outcome {
    let t = Instant::now();
    // partial weak rankings, as in peer feedback
    let (optimal, worst_ratio) = kemeny_trial(2, false);
    let secs = t.elapsed().as_secs_f64();
    // complete strict rankings, for comparison only
    let (full_optimal, full_ratio) = kemeny_trial(2, true);
    (
        optimal as f64 / 200.0 >= 0.8 && worst_ratio <= 1.2 && secs < 30.0,
        format!(
            "partial weak rankings: optimal on {optimal}/200, worst cost ratio {worst_ratio:.3}, {secs:.2}s \
             (complete strict rankings: {full_optimal}/200, worst ratio {full_ratio:.3})"
        ),
    )
}

fn check_gradient(f: impl Fn(&[f64]) -> f64, analytic: &[f64], x: &[f64]) -> f64 {
    let fd = oracle::central_gradient(f, x, 1e-5);
    fd.iter().zip(analytic).map(|(a, b)| oracle::rel_err(*a, *b)).fold(0.0, f64::max)
}

fn c3_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let rankings: Vec<Vec<Vec<usize>>> = (0..5).map(|_| random_weak(&random_subset(n, 4, &mut rng), &mut rng)).collect();
    let data = ordinal_dataset(n, &rankings);
    let mut details = Vec::new();
    let mut ok = true;
    for model in [ScoreModel::BradleyTerry, ScoreModel::Thurstone, ScoreModel::PlackettLuce, ScoreModel::ScoreMallows] {
        let problem = ScoreProblem::new(model, &data, &ScoreFitConfig::default()).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            x.extend((0..data.graders.len()).map(|_| rng.random_range(0.3..3.0)));
            let split = |x: &[f64]| {
                let s: BTreeMap<ItemId, f64> = data.items.iter().cloned().zip(x[..n].iter().copied()).collect();
                let e: BTreeMap<GraderId, f64> = data.graders.iter().cloned().zip(x[n..].iter().copied()).collect();
                (s, e)
            };
            let (s, e) = split(&x);
            let obj = problem.objective(&s, &e).unwrap();
            let analytic: Vec<f64> = data
                .items
                .iter()
                .map(|i| obj.score_gradient[i])
                .chain(data.graders.iter().map(|g| obj.reliability_gradient[g]))
                .collect();
            let f = |x: &[f64]| {
                let (s, e) = split(x);
                problem.objective(&s, &e).unwrap().value
            };
            worst = worst.max(check_gradient(f, &analytic, &x));
        }
        ok &= worst <= 1e-4;
        details.push(format!("{model:?} {worst:.1e}"));
    }
    let cardinal = {
        let names = ids(n);
        let graders: Vec<GraderId> = (0..5).map(|g| GraderId::from(format!("g{g}").as_str())).collect();
        let fb = graders
            .iter()
            .map(|g| {
                let grades = random_subset(n, 4, &mut rng).into_iter().map(|i| (names[i].clone(), rng.random_range(1.0..10.0))).collect();
                GraderFeedback::from_cardinal(g.clone(), grades).unwrap()
            })
            .collect();
        Dataset64::new(names, graders, fb).unwrap()
    };
    let hp = NcsHyperparams::default();
    let g = cardinal.feedback.len();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..9.0)).collect();
        x.extend((0..g).map(|_| rng.random_range(-1.0..1.0)));
        x.extend((0..g).map(|_| rng.random_range(0.3..3.0)));
        let state = |x: &[f64]| NcsState { scores: x[..n].to_vec(), biases: x[n..n + g].to_vec(), reliabilities: x[n + g..].to_vec() };
        let obj = ncs_objective(&cardinal, &hp, &state(&x)).unwrap();
        let analytic: Vec<f64> =
            obj.score_gradient.iter().chain(&obj.bias_gradient).chain(&obj.reliability_gradient).copied().collect();
        worst = worst.max(check_gradient(|x| ncs_objective(&cardinal, &hp, &state(x)).unwrap().value, &analytic, &x));
    }
    ok &= worst <= 1e-4;
    details.push(format!("Ncs {worst:.1e}"));
    (ok, format!("worst rel err over 20 points: {}", details.join(", ")))
}

fn c4_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for k in 1..=5 {
        let names = ids(k);
        let perms = oracle::permutations(k);
        let as_ranking = |p: &[usize]| WeakRanking::from_order(p.iter().map(|&i| names[i].clone()).collect()).unwrap();
        for eta in [0.1, 1.0, 3.0] {
            let scores: HashMap<ItemId, f64> = names.iter().map(|i| (i.clone(), rng.random_range(-2.0..2.0))).collect();
            let pl: f64 = perms.iter().map(|p| pl_ranking_log_probability(&as_ranking(p), &scores, eta).unwrap().exp()).sum();
            let mut center: Vec<usize> = (0..k).collect();
            center.shuffle(&mut rng);
            let c = as_ranking(&center);
            let mal: f64 = perms.iter().map(|p| mallows_log_likelihood::<f64>(&c, &as_ranking(p), eta).unwrap().exp()).sum();
            worst = worst.max((pl - 1.0).abs()).max((mal - 1.0).abs());
        }
    }
    (worst <= 1e-9, format!("max |sum - 1| = {worst:.2e} over k <= 5"))
}

fn c5_random_calibration() -> Outcome {
    let names = ids(40);
    let target = TargetSet::single(WeakRanking::from_order(names.clone()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mean = (0..1000)
        .map(|_| {
            let mut order = names.clone();
            order.shuffle(&mut rng);
            ek_error(&target, &WeakRanking::from_order(order).unwrap()).unwrap()
        })
        .sum::<f64>()
        / 1000.0;
    ((mean - 50.0).abs() <= 2.0, format!("mean E_K {mean:.2}%"))
}

fn c6_recovery() -> Outcome {
    let t = Instant::now();
    let methods = [Method::Mal, Method::MalBc, Method::Bt, Method::Thur, Method::Pl];
    let mut sums = [0.0; 5];
    for seed in 0..10 {
        let cfg = SynthConfig { n_items: 40, n_graders: 150, items_per_grader: 7, grader_model: GraderModel::Mallows { eta: 1.0 }, seed, ..SynthConfig::default() };
        let (data, truth) = generate::<f64>(&cfg).unwrap();
        let target = TargetSet::single(truth.ranking);
        for (k, &m) in methods.iter().enumerate() {
            let est = fit(m, &data, &FitConfig64::default().with_seed(seed)).unwrap();
            sums[k] += ek_error(&target, &est.ranking).unwrap() / 10.0;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = sums.iter().all(|&e| e < 20.0) && secs < 120.0;
    let per: Vec<String> = methods.iter().zip(sums).map(|(m, e)| format!("{m} {e:.1}%")).collect();
    (ok, format!("{}, {secs:.1}s", per.join(", ")))
}

fn c7_lazy_identification() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (label, k, bar) in [("posters-like", 7, 0.9), ("reports-like", 4, 0.6)] {
        let cfg = SynthConfig { n_items: 40, n_graders: 150, items_per_grader: k, grader_model: POSTERS_LIKE, seed: 7, ..SynthConfig::default() };
        let (data, _) = generate::<f64>(&cfg).unwrap();
        let fc = FitConfig64::default();
        let r = lazy_identification(&data, Method::MalG, &fc, 10, None, 50, 70).unwrap();
        let h = lazy_identification_heuristic(&data, Method::MalG, &fc, 10, None, 50, 70).unwrap();
        ok &= r.rate >= bar && h.rate < r.rate;
        details.push(format!("{label}: mal+g {:.1}% (need >= {:.0}%), heuristic {:.1}%", 100.0 * r.rate, 100.0 * bar, 100.0 * h.rate));
    }
    (ok, details.join("; "))
}

fn c8_robustness() -> Outcome {
    let mut deltas = Vec::new();
    for seed in 0..20 {
        let cfg = SynthConfig { n_items: 40, n_graders: 150, items_per_grader: 7, grader_model: POSTERS_LIKE, seed, ..SynthConfig::default() };
        let (data, truth) = generate::<f64>(&cfg).unwrap();
        let r = robustness_delta(&data, Method::Mal, &FitConfig64::default(), &[10], &TargetSet::single(truth.ranking), seed).unwrap();
        deltas.push(r[0].delta);
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    (mean.abs() <= 5.0, format!("mean change in E_K with 10 lazy graders {mean:+.2} points over 20 seeds"))
}

fn c9_runtime() -> Outcome {
    let cfg = SynthConfig { n_items: 44, n_graders: 150, items_per_grader: 7, grader_model: POSTERS_LIKE, seed: 9, ..SynthConfig::default() };
    let (data, _) = generate::<f64>(&cfg).unwrap();
    let fc = FitConfig64::default();
    let ordinal = [Method::Mal, Method::MalBc, Method::MalK, Method::Mals, Method::Bt, Method::Thur, Method::Pl];
    let others: Vec<Method> = Method::ALL.into_iter().filter(|m| !ordinal.contains(m) && *m != Method::MalsG).collect();
    let t = time_methods(&data, &ordinal, &fc, 1).unwrap();
    let t2 = time_methods(&data, &others, &fc, 1).unwrap();
    let mut by_time: Vec<(Method, f64)> = t.iter().map(|(m, v)| (*m, v.mean)).collect();
    by_time.sort_by(|a, b| b.1.total_cmp(&a.1));
    let slowest: HashSet<Method> = by_time.iter().take(2).map(|(m, _)| *m).collect();
    let fast = t[&Method::Mal].mean < 1.0 && t[&Method::MalBc].mean < 1.0;
    let ordering = slowest == HashSet::from([Method::Mals, Method::Thur]);
    let bounded = t.iter().chain(&t2).filter(|(m, _)| **m != Method::Mals).all(|(_, v)| v.mean < 30.0);
    let list: Vec<String> = by_time.iter().map(|(m, s)| format!("{m} {s:.3}s")).collect();
    let max_other = t2.iter().map(|(m, v)| (v.mean, *m)).fold((0.0, Method::Mal), |a, b| if b.0 > a.0 { b } else { a });
    (
        fast && ordering && bounded,
        format!(
            "mal/malbc < 1s: {fast}; two slowest are mals and thur: {ordering}; non-mals < 30s: {bounded} [{}; slowest other {} {:.3}s]",
            list.join(", "),
            max_other.1,
            max_other.0
        ),
    )
}

fn run(bin: &str, args: &[&str], dir: &Path) -> Vec<u8> {
    let out = Command::new(bin).args(args).current_dir(dir).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c10_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_opg");
    let mut mismatches = Vec::new();
    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut files = Vec::new();
        run(bin, &["simulate", "--items", "20", "--graders", "40", "--items-per-grader", "5", "--grader-model", "mallows:1.0", "--seed", "3", "--output", "d.json"], d);
        run(bin, &["simulate", "--items", "20", "--graders", "40", "--items-per-grader", "5", "--grader-model", "normal:2", "--lazy-count", "4", "--seed", "3", "--output", "c.csv"], d);
        for (model, input, format) in [("mal+kg", "d.json", "ordinal"), ("pl+g", "d.json", "ordinal"), ("ncs+g", "c.csv", "cardinal"), ("thur", "c.csv", "cardinal")] {
            run(bin, &["estimate", "--model", model, "--input", input, "--format", format, "--seed", "7", "--output", &format!("{model}.json")], d);
            files.push(std::fs::read(d.join(format!("{model}.json"))).unwrap());
        }
        let mut stdout = run(bin, &["evaluate", "--input", "pl+g.json", "--target", "d.truth.json"], d);
        stdout.extend(run(bin, &["experiment", "bootstrap", "--model", "mal,bt", "--input", "d.json", "--format", "ordinal", "--target", "d.truth.json", "--reps", "3", "--seed", "5"], d));
        stdout.extend(run(bin, &["experiment", "lazy", "--model", "mal+g", "--input", "c.csv", "--format", "cardinal", "--lazy-count", "4", "--reps", "3", "--seed", "5"], d));
        run(bin, &["experiment", "downsample", "--model", "malbc", "--input", "d.json", "--format", "ordinal", "--target", "d.truth.json", "--axis", "reviewers", "--levels", "10,40", "--reps", "3", "--output", "curve.json"], d);
        for f in ["d.json", "d.truth.json", "c.csv", "c.truth.json", "curve.json", "curve.curve.csv"] {
            files.push(std::fs::read(d.join(f)).unwrap());
        }
        files.push(stdout);
        outputs.push(files);
    }
    for (k, (a, b)) in outputs[0].iter().zip(&outputs[1]).enumerate() {
        if a != b {
            mismatches.push(k);
        }
    }
    (mismatches.is_empty(), format!("{} outputs compared, mismatches at {mismatches:?}", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Mallows oracle equivalence", c1_mallows_oracle),
        ("Kemeny oracle equivalence", c2_kemeny),
        ("gradient checks", c3_gradients),
        ("normalization", c4_normalization),
        ("random-ranking calibration", c5_random_calibration),
        ("synthetic recovery", c6_recovery),
        ("lazy-grader identification", c7_lazy_identification),
        ("robustness to lazy graders", c8_robustness),
        ("runtime ordering", c9_runtime),
        ("CLI determinism", c10_determinism),
    ];
    let only: Option<usize> = std::env::var("OPG_ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let strict = std::env::var("OPG_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut failed, mut crashed) = (0, 0);
    for (k, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        match std::panic::catch_unwind(check) {
            Ok((pass, detail)) => {
                println!("criterion {:>2} {} {name}: {detail}", k + 1, if pass { "PASS" } else { "FAIL" });
                failed += usize::from(!pass);
            }
            Err(_) => {
                println!("criterion {:>2} FAIL {name}: crashed", k + 1);
                crashed += 1;
            }
        }
    }
    println!("acceptance: {failed} failed, {crashed} crashed");
    if crashed > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
