mod common;

use std::io::Write;

use common::{pgmr_settings, World};
use pgmr::generation::{
    build_prompt, FixtureEntry, GenerationParams, PromptMode, PromptSpec, ReplayProvider,
};
use pgmr::harness::pipeline::{prepare_prompt, RecordOutcome};
use pgmr::harness::{oracle_fixture, run_pipeline, write_jsonl, QueryRecord, RunSettings};
use pgmr::kg::{Memory, UriKind};
use pgmr::metrics::{hallucination, sqm};
use pgmr::retrieval::{ground_query, HashedTrigramEmbedder, RetrieverOptions};
use pgmr::transform::{parse_pgmr, render_pgmr, sparql_to_pgmr};

const EINSTEIN: &str = "German-born theoretical physicist, developer of the theory of relativity, Nobel Prize laureate (1921)";

fn metadata(lines: &[&str]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

#[test]
fn einstein_end_to_end() {
    let ents = metadata(&[
        &format!(r#"{{"uri":"Q937","label":"Albert Einstein","description":"{EINSTEIN}"}}"#),
        r#"{"uri":"Q3012","label":"Ulm","description":"city in Baden-Württemberg, Germany"}"#,
        r#"{"uri":"Q76","label":"Barack Obama","description":"president of the United States from 2009 to 2017"}"#,
    ]);
    let rels = metadata(&[
        r#"{"uri":"P19","label":"place of birth","description":"most specific known birth location of a person"}"#,
        r#"{"uri":"P26","label":"spouse","description":"the subject has the object as their spouse"}"#,
    ]);
    let embedder = HashedTrigramEmbedder::new(128);
    let entities = Memory::load_metadata(ents.path(), UriKind::Entity)
        .unwrap()
        .embed(&embedder)
        .unwrap();
    let relations = Memory::load_metadata(rels.path(), UriKind::Relation)
        .unwrap()
        .embed(&embedder)
        .unwrap();

    let gold = "SELECT ?place WHERE { wd:Q937 wdt:P19 ?place }";
    let t = sparql_to_pgmr(gold, &entities, &relations).unwrap();
    let rendered = render_pgmr(&t.query);
    assert!(rendered.contains("entity1 relation1"), "{rendered}");
    assert!(rendered.contains(&format!("entity1 = [ENT] Albert Einstein [/ENT] {EINSTEIN}")));
    assert!(rendered.contains("relation1 = [REL] place of birth [/REL]"));
    assert!(!rendered.to_lowercase().contains("q937"));

    // a model that misspells the label still lands on the right entity
    let typo = rendered.replace("[ENT] Albert Einstein [/ENT]", "[ENT] Albert Einstien [/ENT]");
    let parsed = parse_pgmr(&typo).unwrap();
    let outcome = ground_query(&parsed, &entities, &relations, &embedder, RetrieverOptions::default())
        .unwrap();
    let sparql = outcome.sparql().expect("grounded");
    assert!(sqm(sparql, gold), "{sparql}");
    assert!(!hallucination(sparql, &entities, &relations));

    // an entity absent from memory is refused instead of invented
    let absent = rendered.replace(
        &format!("[ENT] Albert Einstein [/ENT] {EINSTEIN}"),
        "[ENT] Marie Curie [/ENT] Polish-French physicist and chemist",
    );
    let outcome = ground_query(
        &parse_pgmr(&absent).unwrap(),
        &entities,
        &relations,
        &embedder,
        RetrieverOptions::default(),
    )
    .unwrap();
    assert!(outcome.is_refusal());
}

fn settings(mode: PromptMode, k: usize) -> RunSettings {
    RunSettings {
        spec: PromptSpec::new(mode, Vec::new(), k).unwrap(),
        ..pgmr_settings(0.85)
    }
}

#[test]
fn oracle_runs_score_perfectly_in_every_mode() {
    let world = World::new(60, 0.0, 3);
    for (mode, k) in [(PromptMode::Direct, 0), (PromptMode::Rag, 10), (PromptMode::Pgmr, 0)] {
        let s = settings(mode, k);
        let provider = world.oracle_provider(&s.spec, 0.0, 4);
        let report = run_pipeline(&world.samples, &s, &world.resources(&provider, None));
        let eval = &report.summary.eval;
        assert_eq!(eval.n, 60);
        assert_eq!(eval.sqm, 100.0, "{mode:?}");
        assert_eq!(eval.uri_hallucination, 0.0);
        assert_eq!(eval.qid_em, 100.0);
        assert_eq!(report.summary.generation_failures, 0);
        let ids: Vec<&str> = report.records.iter().map(|r| r.id.as_str()).collect();
        let expected: Vec<&str> = world.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, expected);
    }
}

#[test]
fn direct_generation_can_hallucinate_but_grounding_cannot() {
    let world = World::new(30, 0.0, 5);
    let res_placeholder = ReplayProvider::default();
    let res = world.resources(&res_placeholder, None);

    let direct = settings(PromptMode::Direct, 0);
    let entries: Vec<FixtureEntry> = world
        .samples
        .iter()
        .map(|s| {
            let prompt = prepare_prompt(&s.question, &direct.spec, &res).unwrap().prompt;
            // plausible-looking ids that do not exist in the memory
            FixtureEntry::success(&prompt, &s.gold_sparql.replace("wd:q", "wd:q9"))
        })
        .collect();
    let provider = ReplayProvider::from_entries(entries);
    let report = run_pipeline(&world.samples, &direct, &world.resources(&provider, None));
    assert!(report.summary.eval.uri_hallucination > 50.0);

    let pgmr = settings(PromptMode::Pgmr, 0);
    let noisy = ReplayProvider::from_entries(oracle_fixture(&world.samples, &pgmr.spec, &res, 1.0, 6).unwrap());
    let zero = RunSettings {
        retriever: RetrieverOptions::with_threshold(0.0),
        ..pgmr
    };
    let report = run_pipeline(&world.samples, &zero, &world.resources(&noisy, None));
    assert_eq!(report.summary.eval.uri_hallucination, 0.0);
    assert!(report.records.iter().all(|r| r.outcome == RecordOutcome::Query));
}

#[test]
fn rag_prompt_lists_k_candidates() {
    let world = World::new(20, 0.0, 7);
    let provider = ReplayProvider::default();
    let res = world.resources(&provider, None);
    let spec = PromptSpec::new(PromptMode::Rag, Vec::new(), 10).unwrap();
    let prepared = prepare_prompt(&world.samples[0].question, &spec, &res).unwrap();
    assert_eq!(prepared.retrieved.len(), 10);
    let listed = prepared
        .prompt
        .lines()
        .skip_while(|l| *l != "Candidate URIs:")
        .skip(1)
        .take_while(|l| !l.is_empty())
        .count();
    assert_eq!(listed, 10);
    assert_eq!(
        prepared.prompt,
        build_prompt(&spec, &world.samples[0].question, Some(&prepared.retrieved)).unwrap()
    );
}

#[test]
fn missing_fixture_is_recorded_not_fatal() {
    let world = World::new(10, 0.0, 8);
    let s = settings(PromptMode::Pgmr, 0);
    let mut provider_entries = oracle_fixture(
        &world.samples,
        &s.spec,
        &world.resources(&ReplayProvider::default(), None),
        0.0,
        9,
    )
    .unwrap();
    provider_entries.remove(0);
    let provider = ReplayProvider::from_entries(provider_entries);
    let report = run_pipeline(&world.samples, &s, &world.resources(&provider, None));
    assert_eq!(report.summary.generation_failures, 1);
    assert!(matches!(report.records[0].outcome, RecordOutcome::GenerationFailed { .. }));
    assert_eq!(report.summary.eval.n, 10);
    assert_eq!(report.summary.eval.sqm, 90.0);
}

#[test]
fn records_round_trip_through_jsonl() {
    let world = World::new(15, 0.0, 10);
    let s = RunSettings {
        params: GenerationParams::default(),
        ..settings(PromptMode::Pgmr, 0)
    };
    let provider = world.oracle_provider(&s.spec, 0.5, 11);
    let report = run_pipeline(&world.samples, &s, &world.resources(&provider, None));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    write_jsonl(&path, &report.records).unwrap();
    let back: Vec<QueryRecord> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(back, report.records);
}
