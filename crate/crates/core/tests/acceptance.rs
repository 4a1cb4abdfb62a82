//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

#[path = "common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tutor_core::analytics::{classify_switch, SwitchBehavior};
use tutor_core::classifier::{extract_features, pretest_events, train_forest, ForestParams};
use tutor_core::curriculum::{validate_curriculum, CurriculumConfig};
use tutor_core::events::{read_jsonl, replay, to_jsonl, EventRecord, EventType, Payload};
use tutor_core::policy::PromptPolicy;
use tutor_core::report::session_report;
use tutor_core::scoring::{nlg, ScoreWeights};
use tutor_core::sim::{
    run_experiment, run_pretest, run_session_with_states, PopulationSpec, SimContext, StudentPolicy,
};
use tutor_core::stats::{chi_square_2x2, one_way_anova, t_test, TTestVariant};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn chi_square() -> Outcome {
    let r = chi_square_2x2([[35, 26], [25, 16]]).map_err(|e| e.to_string())?;
    check(
        (r.statistic - 0.13).abs() <= 0.005 && (r.p_value - 0.72).abs() <= 0.01,
        format!("chi2 = {:.4}, p = {:.4}", r.statistic, r.p_value),
    )
}

fn prompt_timing() -> Outcome {
    let policy = PromptPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for _ in 0..n {
        *counts.entry(policy.sample_wait(&mut rng)).or_default() += 1;
    }
    let keys: Vec<u32> = counts.keys().copied().collect();
    if keys != [90, 180, 360] {
        return Err(format!("unexpected wait values {keys:?}"));
    }
    let p: Vec<f64> = counts.values().map(|&c| c as f64 / n as f64).collect();
    let ok = p.iter().zip([0.55, 0.35, 0.10]).all(|(a, b)| (a - b).abs() <= 0.01);
    check(ok, format!("proportions {:.4}/{:.4}/{:.4}", p[0], p[1], p[2]))
}

fn nlg_contract() -> Outcome {
    for x in [0.0, 25.0, 50.0, 75.0, 99.0] {
        let g = nlg(x, x).map_err(|e| e.to_string())?;
        if g != 0.0 {
            return Err(format!("nlg({x}, {x}) = {g}"));
        }
    }
    let g = nlg(62.8, 77.4).map_err(|e| e.to_string())?;
    check((g - 0.239).abs() <= 0.001, format!("nlg(62.8, 77.4) = {g:.4}"))
}

fn kernel_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1_000 {
        common::fuzz_once(&mut rng).map_err(|e| format!("fuzz case {i}: {e}"))?;
    }
    let curriculum = CurriculumConfig::bundled();
    let problems = curriculum.sequence().len();
    let failed: Vec<String> =
        validate_curriculum(&curriculum).into_iter().filter(|r| !r.passed()).map(|r| r.problem_id).collect();
    if !failed.is_empty() {
        return Err(format!("problems failing validation: {failed:?}"));
    }
    let mut scripts = 0;
    for p in curriculum.sequence() {
        if p.worked_example.is_some() {
            let state = p.replay_worked_example().map_err(|e| format!("{}: {e}", p.id))?;
            if !state.completed {
                return Err(format!("worked example {} does not complete", p.id));
            }
            scripts += 1;
        }
    }
    check(
        problems == 28 && scripts == 2,
        format!("1000 fuzzed applications sound, {problems} problems valid, {scripts} worked examples replay"),
    )
}

fn switch_at(index: u32) -> Vec<EventRecord> {
    vec![EventRecord {
        seq: 1,
        timestamp_ms: 0,
        session_id: "s".into(),
        problem_id: Some("L1-4".into()),
        event_type: EventType::StrategySwitched,
        payload: Payload { action_index: Some(index), ..Default::default() },
    }]
}

fn switch_taxonomy(exp: &tutor_core::sim::Experiment) -> Outcome {
    let got = [
        classify_switch(&[]).map_err(|e| e.to_string())?,
        classify_switch(&switch_at(30)).map_err(|e| e.to_string())?,
        classify_switch(&switch_at(31)).map_err(|e| e.to_string())?,
    ];
    let want = [SwitchBehavior::NoSwitch, SwitchBehavior::EarlySwitch, SwitchBehavior::LateSwitch];
    if got != want {
        return Err(format!("boundaries gave {got:?}"));
    }
    for report in [&exp.training, &exp.posttest] {
        for (label, p) in &report.profiles {
            let total = p.pct_no + p.pct_early + p.pct_late;
            if (total - 100.0).abs() > 1e-9 {
                return Err(format!("{label} profile sums to {total}"));
            }
        }
    }
    Ok(format!("0/30/31 boundaries exact, {} profiles sum to 100%", exp.training.profiles.len() * 2))
}

fn early_switch_ordering(exp: &tutor_core::sim::Experiment) -> Outcome {
    let mut detail = Vec::new();
    for report in [&exp.training, &exp.posttest] {
        let pct = |label: &str| report.profiles.get(label).map(|p| p.pct_early);
        let high = ["Selective", "Rote-Experimental"];
        let low = ["Dabbler-Experimental", "Dabbler-Control", "Rote-Control"];
        let (mut min_high, mut max_low) = (f64::INFINITY, f64::NEG_INFINITY);
        for l in high {
            min_high = min_high.min(pct(l).ok_or(format!("missing group {l}"))?);
        }
        for l in low {
            max_low = max_low.max(pct(l).ok_or(format!("missing group {l}"))?);
        }
        let p = report.early_switch_anova.as_ref().ok_or("no ANOVA")?.p_value;
        let phase = format!("{:?}", report.phase).to_lowercase();
        detail.push(format!("{phase}: min high {min_high:.1}% > max low {max_low:.1}%, anova p = {p:.1e}"));
        if !(min_high > max_low && p < 0.001) {
            return Err(detail.join("; "));
        }
    }
    Ok(detail.join("; "))
}

fn classifier_property() -> Outcome {
    let ctx = SimContext::bundled();
    let presets = [StudentPolicy::rote(), StudentPolicy::dabbler(), StudentPolicy::selective()];
    let mut data = Vec::new();
    for i in 0..500u64 {
        let policy = &presets[(i % 3) as usize];
        let log = run_pretest(&ctx, policy, &format!("c{i:03}"), 90_000 + i).map_err(|e| e.to_string())?;
        let fv = extract_features(&pretest_events(&log)).map_err(|e| e.to_string())?;
        data.push((fv, policy.group));
    }
    let (train, test) = data.split_at(250);
    let forest = train_forest(train, ForestParams { seed: 11, ..Default::default() }).map_err(|e| e.to_string())?;
    let m = forest.evaluate(test).map_err(|e| e.to_string())?;
    check(
        m.accuracy >= 0.95 && m.macro_recall >= 0.93 && m.macro_precision >= 0.93,
        format!(
            "held-out accuracy {:.3}, macro recall {:.3}, macro precision {:.3}",
            m.accuracy, m.macro_recall, m.macro_precision
        ),
    )
}

fn replay_determinism() -> Outcome {
    let ctx = SimContext::bundled();
    let spec = PopulationSpec::paper_population(31);
    let policies = spec.policies();
    let weights = ScoreWeights::default();
    let cohorts: Vec<_> = spec.cohorts.iter().collect();
    for i in 0..100u64 {
        let cohort = cohorts[i as usize % cohorts.len()];
        let policy = &policies[&cohort.policy];
        let forced = cohort.condition.map(|c| (policy.group, c));
        let id = format!("r{i:03}");
        let (log, live) =
            run_session_with_states(&ctx, &policies, policy, &id, forced, 5_000 + i).map_err(|e| e.to_string())?;
        let text = to_jsonl(&log);
        let parsed = read_jsonl(text.as_bytes()).map_err(|e| e.to_string())?;
        if to_jsonl(&parsed) != text {
            return Err(format!("{id}: JSONL does not round-trip"));
        }
        let a = replay(&log, &ctx.curriculum).map_err(|e| e.to_string())?;
        let b = replay(&parsed, &ctx.curriculum).map_err(|e| e.to_string())?;
        let states: Vec<_> = b.runs.iter().map(|r| r.state.clone()).collect();
        if states != live {
            return Err(format!("{id}: replayed proof states differ from the live session"));
        }
        let ra = session_report(&a, &ctx.curriculum, &weights).map_err(|e| e.to_string())?.to_json();
        let rb = session_report(&b, &ctx.curriculum, &weights).map_err(|e| e.to_string())?.to_json();
        if ra != rb {
            return Err(format!("{id}: reports differ"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        use rand::Rng;
        let mut sample =
            |n: usize, shift: f64| (0..n).map(|_| rng.random::<f64>() * 10.0 + shift).collect::<Vec<f64>>();
        let a = sample(12, 0.0);
        let b = sample(17, 1.5);
        let f = one_way_anova(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?.statistic;
        let t = t_test(&a, &b, TTestVariant::Pooled).map_err(|e| e.to_string())?.statistic;
        worst = worst.max((f - t * t).abs());
    }
    check(
        worst <= 1e-9,
        format!("100 sessions: JSONL, proof states and reports identical; max |F - t^2| = {worst:.1e}"),
    )
}

fn run(name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let over = budget.is_some_and(|b| elapsed > b);
    let budget_note = budget.map_or(String::new(), |b| format!(" / budget {b:?}"));
    let (tag, detail) = match &outcome {
        Ok(d) if !over => ("PASS", d.clone()),
        Ok(d) => ("FAIL", format!("{d}; over time budget")),
        Err(d) => ("FAIL", d.clone()),
    };
    println!("{tag} {:<26} {detail} [{elapsed:.2?}{budget_note}]", name);
    tag == "PASS"
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run("chi-square reproduction", Some(Duration::from_millis(1)), chi_square);
    ok &= run("prompt timing", Some(secs(1)), prompt_timing);
    ok &= run("nlg contract", None, nlg_contract);
    ok &= run("proof kernel soundness", Some(secs(30)), kernel_soundness);

    // The shape check is timed together with the experiment it inspects.
    let mut experiment = None;
    ok &= run("early-switch ordering", Some(secs(120)), || {
        let exp = run_experiment(&PopulationSpec::paper_population(2024), &SimContext::bundled())
            .map_err(|e| format!("experiment failed: {e}"))?;
        let outcome = early_switch_ordering(&exp);
        experiment = Some(exp);
        outcome
    });
    ok &= run("switch taxonomy", None, || match &experiment {
        Some(exp) => switch_taxonomy(exp),
        None => Err("no experiment to profile".into()),
    });
    ok &= run("classifier property", Some(secs(60)), classifier_property);
    ok &= run("replay determinism", None, replay_determinism);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
