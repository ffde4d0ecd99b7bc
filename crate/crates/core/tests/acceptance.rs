//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mafig_core::afdsl::{Origin, Value};
use mafig_core::harness::{
    corpus_size, load_cases, run_episode, run_suite, write_artifacts, Backends, EpisodeRecord, RunConfig, TimingMode,
};
use mafig_core::library::{base_probes, run_plan, trial_execute, FunctionLibrary};
use mafig_core::perception::{localization_dataset, localization_loss, LossForm};
use mafig_core::sfl::{
    diff_span, diff_span_brute, distill_dataset, embedding_init, strip_marker_text, weight_vector, weighted_nll,
    EmbeddingStats, StatsMode, SupervisionTarget, TokenSeq, Tokenizer, WordPunct, DEFAULT_LAMBDA, EDIT_END, EDIT_START,
};
use mafig_core::simworld::{
    check_feasible, generate_cases, golden_cases, scenario_of, CaseCounts, Cell, EmergencyCase, ScenarioId,
};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Full sequential rule-backend runs, shared by several criteria.
struct SuiteRun {
    scenario: ScenarioId,
    cases: Vec<EmergencyCase>,
    records: Vec<EpisodeRecord>,
    lib: FunctionLibrary,
}

fn full_run(scenario: ScenarioId) -> SuiteRun {
    let cfg = RunConfig { scenario, ..RunConfig::default() };
    let cases = load_cases(&cfg).expect("generated corpus");
    let mut lib = FunctionLibrary::builtin(scenario);
    let (records, _) = run_suite(&cases, &cfg, &Backends::deterministic(), &mut lib).expect("suite runs");
    SuiteRun { scenario, cases, records, lib }
}

fn sfl_formulas() -> Check {
    let got = weighted_nll(&[-0.1, -2.0, -1.0, -3.0], &[1., 5., 5., 0.]).map_err(|e| e.to_string())?;
    ensure((got - 1.372_727_272_727_272_7).abs() < 1e-12, || format!("example gave {got}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let lp: Vec<f64> = (0..n).map(|_| -rng.random_range(0.0..6.0)).collect();
        let mean = lp.iter().map(|x| -x).sum::<f64>() / n as f64;
        let w = weighted_nll(&lp, &vec![1.0; n]).unwrap();
        ensure((w - mean).abs() < 1e-12, || format!("all-ones {w} vs mean {mean}"))?;
        let mut padded = lp.clone();
        let mut wp = vec![1.0; n];
        for _ in 0..rng.random_range(1..10) {
            padded.push(-rng.random_range(0.0..9.0));
            wp.push(0.0);
        }
        let p = weighted_nll(&padded, &wp).unwrap();
        ensure((p - w).abs() < 1e-12, || format!("padding changed {w} to {p}"))?;
    }

    let marked: Vec<String> = ["a", EDIT_START, "x", "y", EDIT_END, "d"].iter().map(|s| s.to_string()).collect();
    let y6 = SupervisionTarget::from_marked(TokenSeq::new(marked, "fixture")).map_err(|e| e.to_string())?;
    ensure(weight_vector(&y6, 5.0, 8).unwrap() == vec![1., 5., 5., 5., 5., 1., 0., 0.], || "weight fixture".into())?;
    let fixtures: [([f64; 6], bool); 2] =
        [([-0.1, -1.0, -2.0, -2.5, -1.0, -0.2], true), ([-2.0, -0.1, -0.2, -0.1, -0.1, -3.0], false)];
    let lambdas = [1.0, 1.5, 2.0, 5.0, 10.0, 50.0];
    for (lp, rising) in fixtures {
        let losses: Vec<f64> =
            lambdas.iter().map(|l| weighted_nll(&lp, &weight_vector(&y6, *l, 6).unwrap()).unwrap()).collect();
        let ok = losses.windows(2).all(|w| if rising { w[1] > w[0] } else { w[1] < w[0] });
        ensure(ok, || format!("not monotone: {losses:?}"))?;
    }
    Ok("example 1.3727272..., 200 all-ones/padding fixtures, monotone in lambda".into())
}

fn round_trip() -> Check {
    let mut n = 0;
    let mut build = Duration::ZERO;
    let mut verify = Duration::ZERO;
    for sc in ScenarioId::ALL {
        let t = Instant::now();
        let recs = distill_dataset(sc, &WordPunct, DEFAULT_LAMBDA).map_err(|e| e.to_string())?;
        build += t.elapsed();
        let t = Instant::now();
        for r in &recs {
            let y = WordPunct.tokenize(&r.target_with_markers);
            let s = y.iter().position(|t| t == EDIT_START).ok_or("no start marker")?;
            let e = y.iter().position(|t| t == EDIT_END).ok_or("no end marker")?;
            let fstar: Vec<String> = y.iter().filter(|t| *t != EDIT_START && *t != EDIT_END).cloned().collect();
            let text = strip_marker_text(&r.target_with_markers);
            ensure(fstar.concat() == text, || "token strip and text strip disagree".into())?;
            mafig_core::afdsl::parse_unresolved(&text).map_err(|e| format!("{}: {e}", r.meta.function))?;
            let f = WordPunct.tokenize(&r.original);
            let suffix = &y[e + 1..];
            ensure(f.len() >= s + suffix.len(), || "prefix and suffix overlap in f".into())?;
            ensure(f[..s] == y[..s], || format!("{}: prefix differs from f", r.meta.function))?;
            ensure(f[f.len() - suffix.len()..] == *suffix, || format!("{}: suffix differs from f", r.meta.function))?;
            n += 1;
        }
        verify += t.elapsed();
    }
    ensure(verify < Duration::from_secs(5), || format!("check took {verify:?}"))?;
    Ok(format!("{n} records, check {:.2} s (dataset construction {:.2} s)", verify.as_secs_f64(), build.as_secs_f64()))
}

fn diff_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alphabet = ["a", "b", "c", " ", "("];
    let mut tested = 0;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.random_range(0..12);
        (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())].to_owned()).collect()
    };
    while tested < 2000 {
        let f = draw(&mut rng);
        let mut g = f.clone();
        // Mostly small edits of f, sometimes unrelated sequences.
        if rng.random_bool(0.2) {
            g = draw(&mut rng);
        } else {
            for _ in 0..rng.random_range(1..4) {
                let at = rng.random_range(0..=g.len());
                match rng.random_range(0..3) {
                    0 => g.insert(at, alphabet[rng.random_range(0..alphabet.len())].to_owned()),
                    1 if at < g.len() => {
                        g.remove(at);
                    }
                    _ if at < g.len() => g[at] = alphabet[rng.random_range(0..alphabet.len())].to_owned(),
                    _ => {}
                }
            }
        }
        if f == g {
            continue;
        }
        let fast = diff_span(&f, &g).map_err(|e| e.to_string())?;
        let slow = diff_span_brute(&f, &g);
        ensure(Some(fast) == slow, || format!("{f:?} -> {g:?}: {fast:?} vs {slow:?}"))?;
        tested += 1;
    }
    Ok(format!("{tested} random pairs agree"))
}

fn sampler() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let zero = EmbeddingStats::from_matrix(&rows, 0.0, StatsMode::PerDimension).unwrap();
    ensure(embedding_init(&zero, 3).unwrap() == zero.mu, || "gamma 0 moved off the mean".into())?;
    let stats = EmbeddingStats::from_matrix(&rows, 0.01, StatsMode::PerDimension).unwrap();
    let n = 10_000;
    let draws: Vec<Vec<f64>> = (0..n as u64).map(|s| embedding_init(&stats, s).unwrap()).collect();
    for j in 0..stats.dim {
        let target = stats.gamma * stats.var[j];
        let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let bound = 4.0 * (target / n as f64).sqrt();
        ensure((mean - stats.mu[j]).abs() <= bound, || format!("dim {j}: mean off by {}", mean - stats.mu[j]))?;
        ensure((var / target - 1.0).abs() <= 0.1, || format!("dim {j}: variance ratio {}", var / target))?;
    }
    Ok(format!("gamma 0 exact; {n} draws over {} dimensions within bounds", stats.dim))
}

fn loss_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..300 {
        let k = rng.random_range(1..12);
        let mut scores = BTreeMap::new();
        let mut labels = BTreeMap::new();
        let all_one = i % 3 == 0;
        for j in 0..k {
            let name = format!("f{j}");
            let y = u8::from(rng.random_bool(0.4));
            let p = if all_one && y == 1 { 1.0 } else { rng.random_range(0.001..=1.0) };
            scores.insert(name.clone(), p);
            labels.insert(name, y);
        }
        let got = localization_loss(&scores, &labels, LossForm::PositiveOnly).map_err(|e| e.to_string())?;
        let product: f64 = labels.iter().filter(|(_, y)| **y == 1).map(|(n, _)| scores[n]).product();
        let want = -product.ln() + 0.0;
        ensure((got - want).abs() < 1e-12, || format!("fixture {i}: {got} vs {want}"))?;
        let positives_one = labels.iter().filter(|(_, y)| **y == 1).all(|(n, _)| scores[n] == 1.0);
        ensure((got == 0.0) == positives_one, || format!("fixture {i}: zero-loss law broken"))?;
    }
    Ok("300 fixtures match; zero loss exactly when every positive scores 1".into())
}

fn cardinalities() -> Check {
    let want_lib = [8, 15, 25];
    let want_loc = [30, 50, 100];
    let want_distill = [80, 170, 120];
    let want_cases = [199, 398, 642];
    let want_cats = [5, 8, 15];
    let mut got = Vec::new();
    for (i, sc) in ScenarioId::ALL.into_iter().enumerate() {
        let lib = FunctionLibrary::builtin(sc);
        let loc = localization_dataset(sc, &lib.specs()).map_err(|e| e.to_string())?.len();
        let distill = distill_dataset(sc, &WordPunct, DEFAULT_LAMBDA).map_err(|e| e.to_string())?.len();
        let cases = generate_cases(sc, 2024, CaseCounts::Total(corpus_size(sc))).map_err(|e| e.to_string())?;
        let cats: BTreeSet<&str> = cases.iter().map(|c| c.category()).collect();
        let row = [lib.len(), loc, distill, cases.len(), cats.len()];
        let want = [want_lib[i], want_loc[i], want_distill[i], want_cases[i], want_cats[i]];
        ensure(row == want, || format!("{sc}: got {row:?}, want {want:?}"))?;
        ensure(scenario_of(sc).categories().len() == want_cats[i], || format!("{sc}: taxonomy size"))?;
        got.push(format!("{sc} {row:?}"));
    }
    Ok(got.join("; "))
}

fn golden_fig7() -> Check {
    let case = golden_cases(ScenarioId::Deck).map_err(|e| e.to_string())?.remove(0);
    let mut lib = FunctionLibrary::builtin(ScenarioId::Deck);
    let rec = run_episode(&case, &Backends::deterministic(), 0.5, TimingMode::Steps, &mut lib);
    ensure(rec.success, || format!("episode failed: {rec:?}"))?;
    ensure(!rec.proposals.is_empty() && rec.proposals.iter().all(|p| p.passed), || "a proposal failed".into())?;
    let truth = case.truth().map_err(|e| e.to_string())?;
    ensure(truth.cell("vehicles", 2, "cell") == Some((0, 1)), || "vehicle 2 not relocated".into())?;
    let plan = run_plan(&lib, &case.state).result.map_err(|e| e.to_string())?;
    ensure(check_feasible(&truth, &plan).is_pass(), || "post-repair plan infeasible".into())?;
    let blocked: BTreeSet<Cell> = (8..=9).flat_map(|x| (5..=6).map(move |y| (x, y))).collect();
    let Some(Value::List(assigns)) = plan.field("assignments") else {
        return Err("plan has no assignments".into());
    };
    for a in assigns {
        let v = a.field("vehicle").and_then(Value::as_int).ok_or("assignment without vehicle")?;
        ensure(v != 3 && v != 5, || format!("failed vehicle {v} assigned"))?;
        let Some(Value::List(route)) = a.field("route") else {
            return Err("assignment without route".into());
        };
        for c in route {
            let c = c.as_coord().ok_or("bad route cell")?;
            ensure(!blocked.contains(&c), || format!("route of vehicle {v} enters {c:?}"))?;
        }
    }
    let names: Vec<&str> = rec.proposals.iter().map(|p| p.function.as_str()).collect();
    Ok(format!("{} assignments, repaired {}", assigns.len(), names.join(", ")))
}

fn rule_suite(runs: &[SuiteRun]) -> Check {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for sc in ScenarioId::ALL {
        let golden = golden_cases(sc).map_err(|e| e.to_string())?;
        ensure(golden.len() >= 10, || format!("{sc}: only {} golden cases", golden.len()))?;
        let mut lib = FunctionLibrary::builtin(sc);
        let g_ok = golden
            .iter()
            .filter(|c| run_episode(c, &Backends::deterministic(), 0.5, TimingMode::Steps, &mut lib).success)
            .count();
        let run = runs.iter().find(|r| r.scenario == sc).unwrap();
        let ok = run.records.iter().filter(|r| r.success).count();
        let rate = ok as f64 / run.records.len() as f64;
        if g_ok != golden.len() {
            failures.push(format!("{sc} golden {g_ok}/{}", golden.len()));
        }
        if rate < 0.95 {
            failures.push(format!("{sc} generated {:.2}%", rate * 100.0));
        }
        parts.push(format!("{sc} golden {g_ok}/{} generated {ok}/{}", golden.len(), run.records.len()));
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(parts.join("; "))
}

fn reproducibility() -> Check {
    let cfg = RunConfig { scenario: ScenarioId::Port, ..RunConfig::default() };
    let cases = load_cases(&cfg).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    let mut n_total = (0, 0.0, 0.0);
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut lib = FunctionLibrary::builtin(ScenarioId::Port);
        let (recs, s) = run_suite(&cases, &cfg, &Backends::deterministic(), &mut lib).map_err(|e| e.to_string())?;
        write_artifacts(dir.path(), &recs, &s).map_err(|e| e.to_string())?;
        files.push(std::fs::read(dir.path().join("summary.csv")).map_err(|e| e.to_string())?);
        n_total = (s.n, s.avg_time, s.total_time);
    }
    ensure(files[0] == files[1], || "summary.csv differs between runs".into())?;
    let (n, avg, total) = n_total;
    let shown_avg = mafig_core::harness::round_half_up(avg, 2);
    let shown_total = mafig_core::harness::round_half_up(total, 2);
    let slack = 0.005 * n as f64 + 0.005;
    ensure((shown_avg * n as f64 - shown_total).abs() <= slack, || {
        format!("avg {shown_avg} x {n} vs total {shown_total}")
    })?;
    ensure((avg * n as f64 - total).abs() < 1e-9, || "unrounded avg x N differs from total".into())?;
    Ok(format!("summary.csv identical ({} bytes); N={n} total={shown_total:.2} avg={shown_avg:.2}", files[0].len()))
}

fn library_laws() -> Check {
    let mut pools: Vec<(ScenarioId, Vec<EmergencyCase>)> = Vec::new();
    for sc in ScenarioId::ALL {
        let mut cases = golden_cases(sc).map_err(|e| e.to_string())?;
        cases.extend(generate_cases(sc, 99, CaseCounts::Total(20)).map_err(|e| e.to_string())?);
        pools.push((sc, cases));
    }
    let mut runner = TestRunner::new(PropConfig { cases: 24, failure_persistence: None, ..PropConfig::default() });
    let strategy = (0usize..3, proptest::collection::vec(0usize..1000, 1..10));
    runner
        .run(&strategy, |(which, picks)| {
            let (sc, cases) = &pools[which];
            let mut lib = FunctionLibrary::builtin(*sc);
            let backends = Backends::deterministic();
            for pick in picks {
                let case = &cases[pick % cases.len()];
                let (len0, hist0) = (lib.len(), lib.history().len());
                run_episode(case, &backends, 0.5, TimingMode::Steps, &mut lib);
                proptest::prop_assert!(lib.len() >= len0);
                proptest::prop_assert!(lib.history().len() >= hist0);
                // Re-committing what is already there changes nothing.
                let hist = lib.history().to_vec();
                for f in lib.functions().cloned().collect::<Vec<_>>() {
                    let again = lib.prepare(&f.source.text, Origin::Edited).unwrap();
                    let verdict = trial_execute(&lib, &again, base_probes(*sc));
                    if verdict.pass {
                        let out = lib.commit(&again, &verdict, 0, "law").unwrap();
                        proptest::prop_assert_eq!(out, mafig_core::library::CommitOutcome::Unchanged);
                    }
                }
                proptest::prop_assert_eq!(lib.history(), &hist[..]);
                // History replay reproduces every committed function.
                for (name, (version, source)) in lib.replay_sources() {
                    let f = lib.get(&name).unwrap();
                    proptest::prop_assert_eq!(f.version, version);
                    proptest::prop_assert_eq!(&f.source.text, &source);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("24 random commit sequences over three scenarios".into())
}

fn self_evolution(runs: &[SuiteRun]) -> Check {
    let mut parts = Vec::new();
    for run in runs {
        let mut lib = run.lib.clone();
        let done: Vec<&EmergencyCase> =
            run.cases.iter().zip(&run.records).filter(|(_, r)| r.success).map(|(c, _)| c).collect();
        let hist = lib.history().len();
        let mut bad = Vec::new();
        for c in &done {
            let r = run_episode(c, &Backends::deterministic(), 0.5, TimingMode::Steps, &mut lib);
            if !r.success || !r.proposals.is_empty() {
                bad.push(c.id.clone());
            }
        }
        ensure(bad.is_empty(), || format!("{}: {} replays needed work: {:?}", run.scenario, bad.len(), bad))?;
        ensure(lib.history().len() == hist, || format!("{}: replay committed", run.scenario))?;
        parts.push(format!("{} {} replays", run.scenario, done.len()));
    }
    Ok(format!("{}, zero proposals", parts.join(", ")))
}

fn main() {
    let runs: Vec<SuiteRun> = ScenarioId::ALL.into_iter().map(full_run).collect();
    type Criterion<'a> = (&'a str, Option<Duration>, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("sfl-formulas", Some(Duration::from_secs(1)), Box::new(sfl_formulas)),
        ("marker-round-trip", None, Box::new(round_trip)),
        ("diff-span-oracle", Some(Duration::from_secs(10)), Box::new(diff_oracle)),
        ("embedding-sampler", Some(Duration::from_secs(10)), Box::new(sampler)),
        ("localization-loss-oracle", None, Box::new(loss_oracle)),
        ("dataset-cardinalities", None, Box::new(cardinalities)),
        ("golden-fig7", Some(Duration::from_secs(5)), Box::new(golden_fig7)),
        ("rule-backend-suite", None, Box::new(|| rule_suite(&runs))),
        ("harness-reproducibility", None, Box::new(reproducibility)),
        ("library-laws", None, Box::new(library_laws)),
        ("self-evolution", None, Box::new(|| self_evolution(&runs))),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if took >= *l => Err(format!("took {:.2} s, limit {} s", took.as_secs_f64(), l.as_secs())),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => {
                failed += 1;
                ("FAIL", d.clone())
            }
        };
        println!("{tag} C{:02} {name} ({:.2} s): {detail}", i + 1, took.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
