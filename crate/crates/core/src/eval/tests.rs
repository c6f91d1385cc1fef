use proptest::prelude::*;

use super::*;
use crate::extract::ExtractOptions;
use crate::ingest::Document;
use crate::llm::{FnCompletion, LlmRequest, LlmResponse};
use crate::schema::default_schema;

fn j(task: Task, id: usize, ty: &str, ok: bool) -> Judgment {
    Judgment {
        task,
        item_id: format!("{task}-{id}"),
        item_type: ty.to_string(),
        verdict: if ok { Verdict::Correct } else { Verdict::Incorrect },
    }
}

fn block(task: Task, ty: &str, correct: usize, incorrect: usize) -> Vec<Judgment> {
    (0..correct + incorrect).map(|i| j(task, i, ty, i < correct)).collect()
}

#[test]
fn nineteen_of_twenty() {
    let a = accuracy(&block(Task::Ner, "Company", 19, 1), Task::Ner).unwrap();
    assert_eq!(a.ratio, 0.95);
    assert_eq!(a.counts, Counts { correct: 19, incorrect: 1 });
}

#[test]
fn all_incorrect_is_zero() {
    assert_eq!(accuracy(&block(Task::Re, "owns", 0, 5), Task::Re).unwrap().ratio, 0.0);
}

#[test]
fn reference_ratios_are_exact() {
    let mut all = block(Task::Ner, "Company", 95, 5);
    all.extend(block(Task::Re, "owns", 82, 18));
    all.extend(block(Task::Ed, "Company", 98, 2));
    assert_eq!(accuracy(&all, Task::Ner).unwrap().ratio, 0.95);
    assert_eq!(accuracy(&all, Task::Re).unwrap().ratio, 0.82);
    assert_eq!(accuracy(&all, Task::Ed).unwrap().ratio, 0.98);
    let supplies = block(Task::Re, "suppliesTo", 71, 29);
    assert_eq!(accuracy_by_type(&supplies, Task::Re).unwrap()["suppliesTo"].ratio, 0.71);
}

#[test]
fn empty_task_is_an_error() {
    let js = block(Task::Ner, "Company", 3, 0);
    assert_eq!(accuracy(&js, Task::Re), Err(EvalError::EmptyJudgmentSet(Task::Re)));
    assert_eq!(accuracy_by_type(&js, Task::Ed), Err(EvalError::EmptyJudgmentSet(Task::Ed)));
    assert_eq!(AccuracyReport::from_judgments(&[]), Err(EvalError::EmptyJudgmentSet(Task::Ner)));
}

#[test]
fn by_type_omits_unjudged_types() {
    let by = accuracy_by_type(&block(Task::Ner, "Mine", 4, 0), Task::Ner).unwrap();
    assert_eq!(by.len(), 1);
    assert_eq!(by["Mine"].ratio, 1.0);
}

#[test]
fn reads_csv() {
    let text = "task,item_id,item_type,verdict\nner,n1,Company,correct\nre, r1 ,suppliesTo,incorrect\ned,e1,Company,correct\n";
    let js = read_judgments(text.as_bytes()).unwrap();
    assert_eq!(js.len(), 3);
    assert_eq!(js[1], Judgment { task: Task::Re, item_id: "r1".into(), item_type: "suppliesTo".into(), verdict: Verdict::Incorrect });
    validate_judgments(&js, &default_schema()).unwrap();
}

#[test]
fn csv_errors() {
    let bad_header = "task,id,type,verdict\nner,n1,Company,correct\n";
    assert!(matches!(read_judgments(bad_header.as_bytes()), Err(EvalError::MalformedJudgments { line: 1, .. })));
    let bad_verdict = "task,item_id,item_type,verdict\nner,n1,Company,correct\nner,n2,Company,maybe\n";
    assert!(matches!(read_judgments(bad_verdict.as_bytes()), Err(EvalError::MalformedJudgments { line: 3, .. })));
    let bad_task = "task,item_id,item_type,verdict\nqa,n1,Company,correct\n";
    assert!(read_judgments(bad_task.as_bytes()).is_err());
    let js = vec![j(Task::Ner, 1, "Factory", true)];
    assert!(matches!(validate_judgments(&js, &default_schema()), Err(EvalError::UnknownItemType { .. })));
}

#[test]
fn report_markdown_rounds_and_json_keeps_raw() {
    let mut js = block(Task::Ner, "Company", 2, 1);
    js.extend(block(Task::Re, "owns", 1, 0));
    let r = AccuracyReport::from_judgments(&js).unwrap();
    assert!(!r.per_task.contains_key(&Task::Ed));
    let md = r.to_markdown();
    assert!(md.contains("| Named Entity Recognition | 2 | 3 | 0.67 |"), "{md}");
    assert!(r.to_json().contains("0.6666666666666666"));
    assert_eq!(md, r.to_markdown());
}

// oracle: mean by running sum, variance from pairwise squared differences,
// range from a full sort
fn oracle(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mut mean = 0.0;
    for x in v {
        mean += x;
    }
    mean /= n;
    let mut pair = 0.0;
    for a in v {
        for b in v {
            pair += (a - b) * (a - b);
        }
    }
    let std = (pair / (2.0 * n * (n - 1.0))).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    (mean, std, std / mean, s[s.len() - 1] - s[0])
}

#[test]
fn one_to_seven() {
    let (m, s, cv, r) = consistency_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
    assert!((m - 4.0).abs() < 1e-6);
    assert!((s - 2.160247).abs() < 1e-6);
    assert!((cv - 0.540062).abs() < 1e-6);
    assert!((r - 6.0).abs() < 1e-6);
}

#[test]
fn constant_series() {
    assert_eq!(consistency_stats(&[5.0; 7]).unwrap(), (5.0, 0.0, 0.0, 0.0));
}

#[test]
fn degenerate_and_zero_mean() {
    assert!(matches!(consistency_stats(&[3.0]), Err(ConsistencyError::DegenerateSeries(1))));
    assert!(matches!(consistency_stats(&[]), Err(ConsistencyError::DegenerateSeries(0))));
    assert!(matches!(consistency_stats(&[0.0, 0.0]), Err(ConsistencyError::ZeroMeanCV)));
}

#[test]
fn reference_cv_rounding() {
    assert_eq!(format!("{:.2}", 6.22 / 223.86), "0.03");
    assert_eq!(format!("{:.2}", 5.55 / 137.43), "0.04");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stats_match_oracle(v in prop::collection::vec(0.0f64..1000.0, 2..=50)) {
        let (m, s, cv, r) = consistency_stats(&v).unwrap();
        let (om, os, ocv, or) = oracle(&v);
        prop_assert!((m - om).abs() < 1e-9);
        prop_assert!((s - os).abs() < 1e-9);
        prop_assert!((cv - ocv).abs() < 1e-9);
        prop_assert!((r - or).abs() < 1e-9);
    }

    #[test]
    fn accuracy_matches_recount(raw in prop::collection::vec((0usize..3, 0usize..3, any::<bool>()), 0..=100)) {
        let tasks = Task::ALL;
        let types = ["Company", "Mine", "owns"];
        let js: Vec<Judgment> = raw.iter().enumerate().map(|(i, &(t, ty, ok))| j(tasks[t], i, types[ty], ok)).collect();
        for task in tasks {
            let mine: Vec<&Judgment> = js.iter().filter(|x| x.task == task).collect();
            match accuracy(&js, task) {
                Err(e) => prop_assert!(mine.is_empty() && e == EvalError::EmptyJudgmentSet(task)),
                Ok(a) => {
                    let correct = mine.iter().filter(|x| x.verdict == Verdict::Correct).count();
                    prop_assert_eq!(a.counts.total(), mine.len());
                    prop_assert_eq!(a.ratio, correct as f64 / mine.len() as f64);
                    prop_assert!((0.0..=1.0).contains(&a.ratio));
                    let by = accuracy_by_type(&js, task).unwrap();
                    for ty in types {
                        let sub: Vec<&&Judgment> = mine.iter().filter(|x| x.item_type == ty).collect();
                        match by.get(ty) {
                            None => prop_assert!(sub.is_empty()),
                            Some(a) => {
                                let c = sub.iter().filter(|x| x.verdict == Verdict::Correct).count();
                                prop_assert_eq!(a.ratio, c as f64 / sub.len() as f64);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn docs() -> Vec<Document> {
    vec![Document {
        id: "d".into(),
        source_uri: "file:///d.txt".into(),
        title: "d".into(),
        body: "Alpha supplies Beta. Gamma owns Delta.".into(),
        fetched_at: None,
    }]
}

/// Run k answers with k companies, plus one Mine in even runs.
fn varying(run: usize) -> FnCompletion<impl Fn(&LlmRequest) -> Result<LlmResponse, crate::llm::LlmError> + Send + Sync> {
    FnCompletion(move |_: &LlmRequest| {
        let mut nodes: Vec<_> = (0..run).map(|i| serde_json::json!({"label": "Company", "name": format!("C{i}")})).collect();
        if run.is_multiple_of(2) {
            nodes.push(serde_json::json!({"label": "Mine", "name": "Pit"}));
        }
        let rels: Vec<_> = (1..run)
            .map(|i| serde_json::json!({"source": format!("C{}", i - 1), "target": format!("C{i}"), "type": "suppliesTo"}))
            .collect();
        Ok(LlmResponse::normal(serde_json::json!({"nodes": nodes, "relationships": rels}).to_string()))
    })
}

#[test]
fn run_report_recomputes_from_its_counts() {
    let report = consistency_run(&docs(), &default_schema(), &ExtractOptions::default(), DEFAULT_RUNS, |k| Ok(varying(k))).unwrap();
    assert_eq!(report.runs, 7);
    let nodes: Vec<usize> = report.per_run_counts.iter().map(|r| r.nodes).collect();
    assert_eq!(nodes, vec![1, 3, 3, 5, 5, 7, 7]);
    // Mine appears in runs 2, 4, 6 only; other runs count as zero
    assert_eq!(report.series()["node:Mine"], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    for (name, values) in report.series() {
        let (m, s, cv, r) = oracle(&values);
        let st = report.stats[&name];
        assert!((st.mean - m).abs() < 1e-9 && (st.std - s).abs() < 1e-9 && (st.range - r).abs() < 1e-9, "{name}");
        assert!((st.cv.unwrap() - cv).abs() < 1e-9, "{name}");
    }
    let md = report.to_markdown();
    assert!(md.contains("| Series | Mean | Standard Deviation | Coefficient of Variation | Range |"));
    assert!(md.contains("| Node Type | Mean"));
    assert!(md.contains("| Relationship Type | Mean"));
    assert_eq!(md, report.to_markdown());
    let back: ConsistencyReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn identical_runs_have_zero_spread() {
    let report = consistency_run(&docs(), &default_schema(), &ExtractOptions::default(), 2, |_| Ok(varying(3))).unwrap();
    for st in report.stats.values() {
        assert_eq!(st.std, 0.0);
        assert_eq!(st.cv, Some(0.0));
        assert_eq!(st.range, 0.0);
    }
}

#[test]
fn run_errors_carry_the_index() {
    let err = consistency_run(&docs(), &default_schema(), &ExtractOptions::default(), 3, |k| {
        if k == 2 {
            Err(crate::llm::LlmError::StorageError("missing".into()))
        } else {
            Ok(varying(k))
        }
    })
    .unwrap_err();
    assert!(matches!(err, ConsistencyError::Backend { run: 2, .. }));
    assert!(err.to_string().starts_with("run 2:"));

    let failing = |_: usize| Ok(FnCompletion(|_: &LlmRequest| Ok(LlmResponse::normal("no json here"))));
    let err = consistency_run(&docs(), &default_schema(), &ExtractOptions::default(), 2, failing).unwrap_err();
    assert!(matches!(err, ConsistencyError::Extract { run: 1, .. }));
    assert!(matches!(consistency_run(&docs(), &default_schema(), &ExtractOptions::default(), 1, |k| Ok(varying(k))), Err(ConsistencyError::DegenerateSeries(1))));
}

#[test]
fn zero_series_has_no_cv() {
    let runs = vec![
        RunCounts { run: 1, ..RunCounts::default() },
        RunCounts { run: 2, ..RunCounts::default() },
    ];
    let r = ConsistencyReport::from_runs(runs).unwrap();
    assert_eq!(r.stats["nodes"].cv, None);
    assert!(r.to_markdown().contains("| n/a |"));
}
