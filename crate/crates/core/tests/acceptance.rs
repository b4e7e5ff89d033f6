//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Duration;

use common::{pgmr_settings, scan_uris, World};
use pgmr::harness::{
    benchmark_lookup, build_unknown_uri_split, default_thresholds, measure_latency,
    run_memory_scaling, run_refusal_experiment, SplitOptions,
};
use pgmr::kg::{compose_key_text, synthetic_distractors, Memory, UriKind, UriRef};
use pgmr::metrics::{bleu, hallucination, sqm, uri_em};
use pgmr::retrieval::{
    ground_query, retrieve, EmbeddingProvider, GroundingStatus, HashedTrigramEmbedder,
    ResolutionMethod, RetrieverOptions, DEFAULT_DIMENSION,
};
use pgmr::synth::corpus::{generate_corpus, CorpusOptions};
use pgmr::transform::{parse_pgmr, render_pgmr, sparql_to_pgmr, PlaceholderBinding};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(3..10);
    (0..len)
        .map(|_| rng.random_range(b'a'..=b'z') as char)
        .collect()
}

fn random_text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words)
        .map(|_| random_word(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

fn hallucination_closure() -> Outcome {
    let world = World::new(1000, 0.05, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let known: HashSet<UriRef> = world
        .entities
        .uris()
        .chain(world.relations.uris())
        .collect();
    let options = RetrieverOptions::with_threshold(0.0);
    let (mut grounded, mut leaked, mut flagged) = (0usize, 0usize, 0usize);
    for sample in &world.samples {
        let mut t = sparql_to_pgmr(&sample.gold_sparql, &world.entities, &world.relations)
            .map_err(|e| e.to_string())?;
        for b in &mut t.query.bindings {
            match rng.random_range(0..3) {
                0 => {
                    b.label = random_text(&mut rng, 2);
                    b.description = random_text(&mut rng, 5);
                }
                1 => b.description = random_text(&mut rng, 4),
                _ => {
                    let mem = match b.kind {
                        UriKind::Entity => &world.entities,
                        UriKind::Relation => &world.relations,
                    };
                    let other = mem.records().choose(&mut rng).unwrap();
                    b.label = format!("{} {}", other.label(), random_word(&mut rng));
                }
            }
        }
        let parsed = parse_pgmr(&render_pgmr(&t.query)).map_err(|e| e.to_string())?;
        let outcome = ground_query(
            &parsed,
            &world.entities,
            &world.relations,
            &world.embedder,
            options,
        )
        .map_err(|e| e.to_string())?;
        if let GroundingStatus::Grounded { sparql } = &outcome.status {
            grounded += 1;
            if scan_uris(sparql).iter().any(|u| !known.contains(u)) {
                leaked += 1;
            }
            if hallucination(sparql, &world.entities, &world.relations) {
                flagged += 1;
            }
        }
    }
    check(
        grounded == world.samples.len() && leaked == 0 && flagged == 0,
        format!("{grounded}/{} grounded, {leaked} outside memory, metric {flagged}", world.samples.len()),
    )
}

fn round_trip_rate(world: &World) -> Result<f64, String> {
    let mut matched = 0usize;
    for s in &world.samples {
        let t = sparql_to_pgmr(&s.gold_sparql, &world.entities, &world.relations)
            .map_err(|e| e.to_string())?;
        let parsed = parse_pgmr(&render_pgmr(&t.query)).map_err(|e| e.to_string())?;
        let outcome = ground_query(
            &parsed,
            &world.entities,
            &world.relations,
            &world.embedder,
            RetrieverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        if outcome.sparql().is_some_and(|q| sqm(q, &s.gold_sparql)) {
            matched += 1;
        }
    }
    Ok(100.0 * matched as f64 / world.samples.len() as f64)
}

fn round_trip_fidelity() -> Outcome {
    let unique = round_trip_rate(&World::new(200, 0.0, 21))?;
    let duplicated = round_trip_rate(&World::new(200, 0.2, 22))?;
    check(
        unique == 100.0 && duplicated >= 95.0,
        format!("unique labels {unique:.1}%, duplicated labels {duplicated:.1}%"),
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Term {
    Var(usize),
    Const(String),
}

#[derive(Clone, Debug)]
struct Bgp {
    head: usize,
    triples: Vec<[Term; 3]>,
}

impl Bgp {
    fn render(&self, names: &[String]) -> String {
        let term = |t: &Term| match t {
            Term::Var(v) => format!("?{}", names[*v]),
            Term::Const(c) => c.clone(),
        };
        let body: Vec<String> = self
            .triples
            .iter()
            .map(|[s, p, o]| format!("{} {} {}", term(s), term(p), term(o)))
            .collect();
        format!("select distinct ?{} where {{ {} }}", names[self.head], body.join(" . "))
    }

    fn vars(&self) -> BTreeSet<usize> {
        let mut v: BTreeSet<usize> = self
            .triples
            .iter()
            .flatten()
            .filter_map(|t| match t {
                Term::Var(i) => Some(*i),
                _ => None,
            })
            .collect();
        v.insert(self.head);
        v
    }
}

fn random_bgp(rng: &mut ChaCha8Rng) -> Bgp {
    let n = rng.random_range(1..=5);
    let nvars = rng.random_range(1..=4);
    let mut triples: Vec<[Term; 3]> = Vec::new();
    while triples.len() < n {
        let node = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.6) {
                Term::Var(rng.random_range(0..nvars))
            } else {
                Term::Const(format!("wd:q{}", rng.random_range(1..4)))
            }
        };
        let s = node(rng);
        let o = node(rng);
        let p = if rng.random_bool(0.1) {
            Term::Var(rng.random_range(0..nvars))
        } else {
            Term::Const(format!("wdt:p{}", rng.random_range(1..4)))
        };
        let t = [s, p, o];
        if !triples.contains(&t) {
            triples.push(t);
        }
    }
    let used: Vec<usize> = triples
        .iter()
        .flatten()
        .filter_map(|t| match t {
            Term::Var(i) => Some(*i),
            _ => None,
        })
        .collect();
    let head = used.choose(rng).copied().unwrap_or(0);
    Bgp { head, triples }
}

fn relabel(b: &Bgp, map: &BTreeMap<usize, usize>) -> Bgp {
    let f = |t: &Term| match t {
        Term::Var(v) => Term::Var(map[v]),
        c => c.clone(),
    };
    Bgp {
        head: map[&b.head],
        triples: b
            .triples
            .iter()
            .map(|[s, p, o]| [f(s), f(p), f(o)])
            .collect(),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for i in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(i, n - 1);
            out.push(p);
        }
    }
    out
}

/// Equivalent iff some variable bijection and triple ordering make the two
/// queries identical.
fn brute_force_equivalent(a: &Bgp, b: &Bgp) -> bool {
    let (va, vb): (Vec<usize>, Vec<usize>) = (a.vars().into_iter().collect(), b.vars().into_iter().collect());
    if va.len() != vb.len() || a.triples.len() != b.triples.len() {
        return false;
    }
    for image in permutations(va.len()) {
        let map: BTreeMap<usize, usize> = vb.iter().zip(&image).map(|(v, i)| (*v, va[*i])).collect();
        let mapped = relabel(b, &map);
        if mapped.head != a.head {
            continue;
        }
        for order in permutations(a.triples.len()) {
            if order
                .iter()
                .enumerate()
                .all(|(i, &j)| mapped.triples[j] == a.triples[i])
            {
                return true;
            }
        }
    }
    false
}

fn sqm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base_names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let (mut agree, mut positives) = (0usize, 0usize);
    let mut first_disagreement = None;
    for i in 0..500 {
        let a = random_bgp(&mut rng);
        let b = match rng.random_range(0..4) {
            0 | 1 => {
                let mut vars: Vec<usize> = a.vars().into_iter().collect();
                vars.shuffle(&mut rng);
                let map = a.vars().into_iter().zip(vars).collect();
                let mut b = relabel(&a, &map);
                b.triples.shuffle(&mut rng);
                b
            }
            2 => {
                let mut b = a.clone();
                let t = rng.random_range(0..b.triples.len());
                b.triples[t][2] = match &b.triples[t][2] {
                    Term::Var(v) => Term::Var((v + 1) % 4),
                    Term::Const(_) => Term::Var(rng.random_range(0..4)),
                };
                b.triples.shuffle(&mut rng);
                b
            }
            _ => random_bgp(&mut rng),
        };
        let renamed: Vec<String> = (0..4).map(|k| format!("v{}_{}", k, rng.random_range(0..100))).collect();
        let (qa, qb) = (a.render(&base_names), b.render(&renamed));
        let expected = brute_force_equivalent(&a, &b);
        positives += usize::from(expected);
        if sqm(&qa, &qb) == expected && sqm(&qb, &qa) == expected {
            agree += 1;
        } else if first_disagreement.is_none() {
            first_disagreement = Some(format!("pair {i}: {qa} | {qb} (oracle {expected})"));
        }
    }
    check(
        agree == 500,
        format!(
            "{agree}/500 agree ({positives} equivalent pairs){}",
            first_disagreement.map(|d| format!("; {d}")).unwrap_or_default()
        ),
    )
}

fn refusal_shape() -> Outcome {
    let world = World::new(1000, 0.0, 41);
    let settings = pgmr_settings(0.85);
    let provider = world.oracle_provider(&settings.spec, 0.3, 42);
    let res = world.resources(&provider, None);
    let thresholds = default_thresholds();
    let report = run_refusal_experiment(&world.samples, &settings, &res, &[0.3], &thresholds, 43)
        .map_err(|e| e.to_string())?;
    let at_zero = report.rows.iter().find(|r| r.threshold == 0.0).ok_or("no threshold 0 row")?;
    let sweep: Vec<_> = report.rows.iter().filter(|r| r.threshold >= 0.5).collect();
    let acc: Vec<f64> = sweep.iter().map(|r| r.refusal_accuracy.unwrap_or(0.0)).collect();
    let sqm: Vec<f64> = sweep.iter().map(|r| r.answerable_sqm.unwrap_or(0.0)).collect();
    let acc_monotone = acc.windows(2).all(|w| w[1] >= w[0]);
    let sqm_monotone = sqm.windows(2).all(|w| w[1] <= w[0]);
    check(
        sweep.len() == 10
            && acc_monotone
            && sqm_monotone
            && at_zero.refusal_accuracy == Some(0.0)
            && report.generation_failures == 0,
        format!(
            "refusal accuracy {:.1}% -> {:.1}%, answerable SQM {:.1}% -> {:.1}%, threshold 0 refusal {:?}",
            acc[0],
            acc[acc.len() - 1],
            sqm[0],
            sqm[sqm.len() - 1],
            at_zero.refusal_accuracy
        ),
    )
}

fn memory_scaling() -> Outcome {
    let world = World::new(300, 0.0, 51);
    let settings = pgmr_settings(0.85);
    let provider = world.oracle_provider(&settings.spec, 0.3, 52);
    let res = world.resources(&provider, None);
    let pool = synthetic_distractors(UriKind::Entity, world.entities.len() * 8, &world.entities, 53);
    let factors: Vec<usize> = (1..=9).collect();
    let report = run_memory_scaling(&world.samples, &settings, &res, &factors, &pool)
        .map_err(|e| e.to_string())?;
    let sqm_at = |f: usize| report.rows.iter().find(|r| r.factor == f).map(|r| r.eval.sqm);
    let (one, nine) = (sqm_at(1).ok_or("no factor 1")?, sqm_at(9).ok_or("no factor 9")?);
    check(
        report.factor_one_matches_baseline && one == report.baseline.sqm && (one - nine).abs() <= 10.0,
        format!(
            "SQM factor 1 {one:.1}%, factor 9 {nine:.1}%, factor 1 identical to baseline: {}",
            report.factor_one_matches_baseline
        ),
    )
}

fn retrieval_oracle() -> Outcome {
    let embedder = HashedTrigramEmbedder::new(DEFAULT_DIMENSION);
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let options = RetrieverOptions::with_threshold(0.0);
    let mut checked = 0usize;
    for (size, probes) in [(10usize, 250usize), (100, 250), (1000, 250), (10_000, 250)] {
        let records = synthetic_distractors(UriKind::Entity, size, &Memory::empty(UriKind::Entity), rng.random());
        let keys: Vec<(UriRef, Vec<f32>)> = records
            .iter()
            .map(|r| (r.uri(), embedder.embed(&r.key_text()).unwrap()))
            .collect();
        let memory = Memory::from_records(UriKind::Entity, records)
            .and_then(|m| m.embed(&embedder))
            .map_err(|e| e.to_string())?;
        for _ in 0..probes {
            let binding = PlaceholderBinding::new(
                UriKind::Entity,
                1,
                random_text(&mut rng, 2),
                random_text(&mut rng, 4),
            );
            let got = retrieve(&binding, &memory, &embedder, options).map_err(|e| e.to_string())?;
            if got.method != ResolutionMethod::Embedding {
                return Err(format!("probe resolved by {:?}", got.method));
            }
            let q: Vec<f64> = embedder
                .embed(&compose_key_text(&binding.label, &binding.description))
                .unwrap()
                .into_iter()
                .map(f64::from)
                .collect();
            let cos = |v: &[f32]| -> f64 { v.iter().zip(&q).map(|(a, b)| f64::from(*a) * b).sum() };
            let best = keys.iter().map(|(_, v)| cos(v)).fold(f64::MIN, f64::max);
            let chosen = keys.iter().find(|(u, _)| Some(*u) == got.uri).map(|(_, v)| cos(v));
            // ties within float noise count as the argmax
            if !chosen.is_some_and(|c| c >= best - 1e-6) {
                return Err(format!("memory {size}: picked {:?} at {chosen:?}, argmax {best}", got.uri));
            }
            checked += 1;
        }
    }
    check(checked == 1000, format!("{checked} probes over memories of 10..10000"))
}

fn latency() -> Outcome {
    let world = World::new(500, 0.0, 71);
    let settings = pgmr_settings(0.85);
    let provider = world
        .oracle_provider(&settings.spec, 0.3, 72)
        .with_latency(Duration::from_millis(4));
    let res = world.resources(&provider, None);
    let (report, _) = measure_latency(&world.samples, &settings, &res);
    let t = &report.run.timing;
    let bench = benchmark_lookup(100_000, DEFAULT_DIMENSION, 200, 0.005, 73).map_err(|e| e.to_string())?;
    check(
        report.run.eval.n == 500 && t.within_bound && bench.within_budget,
        format!(
            "pipeline {:.3} ms vs {:.3} + {:.2}·{:.4} ms (error {:.1}%); 100k lookup median {:.2} ms",
            t.t_pipeline_mean * 1e3,
            t.t_generation_mean * 1e3,
            t.k_mean,
            t.t_retrieval_mean * 1e3,
            t.relative_error * 100.0,
            bench.median_s * 1e3
        ),
    )
}

fn metric_battery() -> Outcome {
    let corpus = generate_corpus(&CorpusOptions::new(50, 81));
    let queries: Vec<&str> = corpus.samples.iter().map(|s| s.gold_sparql.as_str()).collect();
    let mut failures = Vec::new();
    for q in &queries {
        if bleu(q, q) != 100.0 {
            failures.push(format!("bleu(q,q) {q}"));
        }
        if !sqm(q, q) {
            failures.push(format!("sqm reflexive {q}"));
        }
    }
    for a in &queries {
        for b in &queries {
            if sqm(a, b) != sqm(b, a) {
                failures.push(format!("sqm symmetric {a} | {b}"));
            }
        }
    }
    let set_cases = [
        ("ask { wd:q1 wdt:p1 wd:q2 . wd:q1 wdt:p1 wd:q2 }", "ask { wd:q2 wdt:p1 wd:q1 }", true),
        ("ask { wd:q1 wdt:p1 wd:q2 }", "ask { wd:q1 wdt:p1 ?x }", false),
        ("ask { wd:q1 wdt:p1 ?x }", "ask { wd:q1 wdt:p2 ?x }", true),
    ];
    for (a, b, expected) in set_cases {
        if uri_em(a, b, UriKind::Entity) != expected {
            failures.push(format!("uri_em {a} | {b}"));
        }
    }
    if uri_em("ask { wd:q1 wdt:p1 ?x }", "ask { wd:q1 wdt:p2 ?x }", UriKind::Relation) {
        failures.push("uri_em relations".into());
    }
    // 1..4-gram precisions 4/5, 3/4, 2/3, 1/2; equal lengths so no penalty
    let expected = 100.0 * (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
    if (bleu("a b c d x", "a b c d e") - expected).abs() > 1e-9 {
        failures.push("hand-computed bleu".into());
    }
    // hypothesis of 4 against reference of 5: precisions all 1, penalty e^(1-5/4)
    let expected = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
    if (bleu("a b c d", "a b c d e") - expected).abs() > 1e-9 {
        failures.push("brevity penalty".into());
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} queries, {} pairs", queries.len(), queries.len() * queries.len())
        } else {
            failures.join("; ")
        },
    )
}

fn split_validity() -> Outcome {
    let corpus = generate_corpus(&CorpusOptions::new(1000, 91));
    let split = build_unknown_uri_split(&corpus.samples, 92, SplitOptions::default())
        .map_err(|e| e.to_string())?;
    let seen: HashSet<UriRef> = split
        .train
        .iter()
        .flat_map(|s| scan_uris(&s.gold_sparql))
        .collect();
    let bad = split
        .test
        .iter()
        .filter(|s| scan_uris(&s.gold_sparql).iter().all(|u| seen.contains(u)))
        .count();
    let ids: HashSet<&str> = split
        .train
        .iter()
        .chain(&split.valid)
        .chain(&split.test)
        .map(|s| s.id.as_str())
        .collect();
    check(
        bad == 0 && !split.test.is_empty() && ids.len() == corpus.samples.len(),
        format!(
            "train {}, valid {}, test {}, {bad} test samples without an unseen URI",
            split.train.len(),
            split.valid.len(),
            split.test.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("hallucination closure", hallucination_closure),
        ("round-trip fidelity", round_trip_fidelity),
        ("sqm permutation oracle", sqm_oracle),
        ("refusal sweep shape", refusal_shape),
        ("memory scaling", memory_scaling),
        ("retrieval argmax oracle", retrieval_oracle),
        ("latency decomposition", latency),
        ("metric battery", metric_battery),
        ("unknown-URI split", split_validity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
