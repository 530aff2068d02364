use std::collections::BTreeMap;

use casim_core::observer::{tau_push, Outcome, TauEntry, TauMap};
use casim_core::scenario::{builtin, builtin_names, coin_observer, load_scenario, save_scenario, CoinTau};
use casim_core::token::{induced_step_distribution, sample_step};
use casim_core::verify::{check_approx, check_exact, tvd};
use casim_core::{
    Assignment, CausalModel, ConditionalTable, DistanceKind, Distribution, FiniteRange, Intervention, Observer,
    PaddedOutput, Sampler, StructuralEquation, TokenSimulator, Verdict, Vocabulary,
};
use proptest::prelude::*;

const TOKENS: [&str; 6] = ["a", "b", "c", "d", "STOP", "ε"];

fn vocab() -> Vocabulary {
    Vocabulary::new(TOKENS, "STOP", "ε").unwrap()
}

/// A row over a random non-empty subset of the non-pad tokens.
fn arb_row() -> impl Strategy<Value = Distribution<String>> {
    prop::collection::vec(prop::option::of(1u32..100), 5).prop_filter_map("empty row", |weights| {
        let total: u32 = weights.iter().flatten().sum();
        if total == 0 {
            return None;
        }
        let pairs = TOKENS[..5]
            .iter()
            .zip(&weights)
            .filter_map(|(t, w)| w.map(|w| (t.to_string(), w as f64 / total as f64)));
        Some(Distribution::from_pairs(pairs).unwrap())
    })
}

fn arb_sampler() -> impl Strategy<Value = Sampler> {
    prop_oneof![
        Just(Sampler::Greedy),
        (1usize..6).prop_map(Sampler::TopK),
        (0.05f64..=1.0).prop_map(Sampler::TopP),
    ]
}

fn arb_dist(n: usize) -> impl Strategy<Value = Distribution<usize>> {
    prop::collection::vec(0u32..50, n).prop_filter_map("zero mass", |w| {
        let total: u32 = w.iter().sum();
        (total > 0).then(|| {
            Distribution::from_pairs(w.iter().enumerate().map(|(i, x)| (i, *x as f64 / total as f64))).unwrap()
        })
    })
}

/// All token sequences over {a, b, c, d, STOP} of length < `depth` that
/// contain no STOP: exactly the prefixes generation can reach.
fn reachable_prefixes(prompt: &[String], depth: usize) -> Vec<Vec<String>> {
    let mut out = vec![prompt.to_vec()];
    let mut frontier = vec![prompt.to_vec()];
    for _ in 1..depth {
        let mut next = Vec::new();
        for p in &frontier {
            for t in &TOKENS[..4] {
                let mut q = p.clone();
                q.push(t.to_string());
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn arb_simulator() -> impl Strategy<Value = TokenSimulator> {
    (1usize..=3, arb_sampler()).prop_flat_map(|(len, sampler)| {
        let prefixes: Vec<Vec<String>> = [vec!["a".to_string()], vec!["b".to_string(), "c".to_string()]]
            .iter()
            .flat_map(|p| reachable_prefixes(p, len))
            .collect();
        let n = prefixes.len();
        prop::collection::vec(arb_row(), n).prop_map(move |rows| {
            let v = vocab();
            let table = ConditionalTable::new(&v, prefixes.iter().cloned().zip(rows)).unwrap();
            TokenSimulator::new(v, table, sampler, len, 6).unwrap()
        })
    })
}

fn prompts() -> Distribution<Vec<String>> {
    Distribution::from_pairs([
        (vec!["a".to_string()], 0.25),
        (vec!["b".to_string(), "c".to_string()], 0.75),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn induced_distributions_normalize(row in arb_row(), sampler in arb_sampler()) {
        let v = vocab();
        let d = induced_step_distribution(&row, sampler, &v).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        prop_assert!(d.support().all(|t| row.prob(t) > 0.0));
        let greedy = induced_step_distribution(&row, Sampler::Greedy, &v).unwrap();
        let top1 = induced_step_distribution(&row, Sampler::TopK(1), &v).unwrap();
        prop_assert_eq!(greedy, top1);
        let wide = induced_step_distribution(&row, Sampler::TopK(row.len()), &v).unwrap();
        prop_assert!(wide.approx_eq(&row, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_cdf_reproduces_induced_law(row in arb_row(), sampler in arb_sampler()) {
        let v = vocab();
        let grid = 10_000;
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for i in 0..grid {
            let r = (i as f64 + 0.5) / grid as f64;
            *counts.entry(sample_step(&row, sampler, &v, r).unwrap().clone()).or_default() += 1.0 / grid as f64;
        }
        let empirical = Distribution::new(counts).unwrap();
        let induced = induced_step_distribution(&row, sampler, &v).unwrap();
        prop_assert!(tvd(&empirical, &induced).unwrap() < 2e-3);
    }

    #[test]
    fn exact_outputs_are_normalized_and_padded(sim in arb_simulator()) {
        let d = sim.exact_output_distribution(&prompts()).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        for out in d.support() {
            prop_assert_eq!(out.tokens().len(), sim.max_output_len());
            prop_assert!(out.is_well_padded(sim.vocab()));
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_outputs_match_generate_over_a_grid(sim in arb_simulator()) {
        // Oracle: midpoint rule over [0,1]^l through `generate`.
        let l = sim.max_output_len();
        let grid: usize = match l { 1 => 2000, 2 => 200, _ => 30 };
        let mut mass: BTreeMap<PaddedOutput, f64> = BTreeMap::new();
        let cell = 1.0 / (grid as f64).powi(l as i32);
        for (prompt, p) in prompts().iter() {
            for idx in 0..grid.pow(l as u32) {
                let mut k = idx;
                let randoms: Vec<f64> = (0..l).map(|_| { let i = k % grid; k /= grid; (i as f64 + 0.5) / grid as f64 }).collect();
                *mass.entry(sim.generate(prompt, &randoms).unwrap()).or_default() += p * cell;
            }
        }
        let oracle = Distribution::new(mass).unwrap();
        let exact = sim.exact_output_distribution(&prompts()).unwrap();
        // At most 4 breakpoints per step, each costing one cell width.
        let bound = l as f64 * 4.0 / grid as f64;
        prop_assert!(tvd(&oracle, &exact).unwrap() <= bound + 1e-9);
    }

    #[test]
    fn monte_carlo_agrees_with_exact(sim in arb_simulator(), seed in any::<u64>()) {
        let samples = 4_000u64;
        let exact = sim.exact_output_distribution(&prompts()).unwrap();
        let mc = sim.mc_output_distribution(&prompts(), samples, seed).unwrap();
        // Loose per-outcome check: no outcome deviates by more than 5 sigma.
        for out in exact.support().chain(mc.support()) {
            let p = exact.prob(out);
            let sigma = (p * (1.0 - p) / samples as f64).sqrt().max(1.0 / samples as f64);
            prop_assert!((mc.prob(out) - p).abs() <= 5.0 * sigma, "{out}: {} vs {p}", mc.prob(out));
        }
        prop_assert_eq!(mc, sim.mc_output_distribution(&prompts(), samples, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn tvd_is_a_metric(p in arb_dist(5), q in arb_dist(5), r in arb_dist(5)) {
        let pq = tvd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - tvd(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!(tvd(&p, &p).unwrap() < 1e-12);
        if pq < 1e-9 {
            prop_assert!(p.approx_eq(&q, 1e-9));
        }
        prop_assert!(pq <= tvd(&p, &r).unwrap() + tvd(&r, &q).unwrap() + 1e-12);
    }

    #[test]
    fn tau_push_conserves_mass_and_is_monotone(outs in arb_dist(8), extra in 0usize..8) {
        let v = Vocabulary::new(["w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "STOP", "ε"], "STOP", "ε").unwrap();
        let outputs = outs.map(|i| PaddedOutput(vec![format!("w{i}")]));
        let entry = |i: usize| TauEntry { pattern: vec![format!("w{i}")], state: Assignment::new([["H", "T"][i % 2]]) };
        let small = TauMap::new((0..extra).map(entry).collect()).unwrap();
        let large = TauMap::new((0..=extra).map(entry).collect()).unwrap();
        let a = tau_push(&outputs, &small, &v);
        let b = tau_push(&outputs, &large, &v);
        prop_assert!((a.total() - outputs.total()).abs() < 1e-12);
        prop_assert!((b.total() - outputs.total()).abs() < 1e-12);
        prop_assert!(b.prob(&Outcome::Unmapped) <= a.prob(&Outcome::Unmapped) + 1e-15);
    }

    #[test]
    fn approx_verdict_is_monotone_in_epsilon(heads in 1u32..99, eps in 0.001f64..0.5, bump in 0.0f64..0.5) {
        let p = heads as f64 / 100.0;
        let sim = casim_core::scenario::coin_simulator(&[("Heads", p), ("Tails", 1.0 - p)], Sampler::TopK(2)).unwrap();
        let obs = coin_observer(CoinTau::Words);
        let at = check_approx(&obs, &sim, eps, DistanceKind::TotalVariation).unwrap();
        let above = check_approx(&obs, &sim, eps + bump, DistanceKind::TotalVariation).unwrap();
        if at.verdict == Verdict::Simulates {
            prop_assert_eq!(above.verdict, Verdict::Simulates);
        }
        prop_assert!((at.distance_value - (p - 0.5).abs()).abs() < 1e-9);
        prop_assert!((at.recompute_distance().unwrap() - at.distance_value).abs() < 1e-12);
    }
}

/// Random observers over a two-exogenous, one-endogenous model.
fn arb_observer() -> impl Strategy<Value = Observer> {
    (
        arb_dist(4),
        prop::collection::vec(arb_dist(3), 8),
        prop::collection::vec(arb_dist(2), 4),
    )
        .prop_map(|(ctx_w, enc_w, iv_w)| {
            let model = xor_model();
            let contexts = model.contexts();
            let context_dist = ctx_w.map(|i| contexts[*i].clone());
            let ivs = [Intervention::Null, Intervention::set([("A", "1")])];
            let prompts = [
                vec!["a".to_string()],
                vec!["b".to_string()],
                vec!["a".to_string(), "b".to_string()],
            ];
            let mut intervention_dist = BTreeMap::new();
            let mut encoding_dist = BTreeMap::new();
            for (i, ctx) in contexts.iter().enumerate() {
                intervention_dist.insert(ctx.clone(), iv_w[i].map(|j| ivs[*j].clone()));
                for (j, iv) in ivs.iter().enumerate() {
                    encoding_dist.insert((ctx.clone(), iv.clone()), enc_w[2 * i + j].map(|k| prompts[*k].clone()));
                }
            }
            Observer::new(model, context_dist, intervention_dist, encoding_dist, TauMap::default()).unwrap()
        })
}

fn xor_model() -> CausalModel {
    let bit = |n: &str| (n.to_string(), FiniteRange::new(["0", "1"]).unwrap());
    let mut table = BTreeMap::new();
    for a in ["0", "1"] {
        for b in ["0", "1"] {
            table.insert(
                vec![a.to_string(), b.to_string()],
                if a == b { "0" } else { "1" }.to_string(),
            );
        }
    }
    CausalModel::new(
        vec![bit("A"), bit("B")],
        vec![bit("Y")],
        vec![StructuralEquation::new("Y", vec!["A".into(), "B".into()], table)],
        vec![Intervention::set([("A", "1")])],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn observer_marginals_normalize(obs in arb_observer()) {
        prop_assert!((obs.prompt_distribution().unwrap().total() - 1.0).abs() < 1e-9);
        prop_assert!((obs.referent_outcome_distribution().unwrap().total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn null_interventions_reduce_to_push_forward(ctx_w in arb_dist(4)) {
        let model = xor_model();
        let contexts = model.contexts();
        let context_dist = ctx_w.map(|i| contexts[*i].clone());
        let enc = contexts.iter().map(|c| (c.clone(), Distribution::point(vec!["a".to_string()]))).collect();
        let obs = Observer::non_intervening(model.clone(), context_dist.clone(), enc, TauMap::default()).unwrap();
        prop_assert_eq!(obs.referent_outcome_distribution().unwrap(), model.push_forward(&context_dist).unwrap());
    }

    #[test]
    fn push_forward_laws(ctx_w in arb_dist(4), scale in 0.0f64..=1.0, which in 0usize..4) {
        let model = xor_model();
        let contexts = model.contexts();
        let d = ctx_w.map(|i| contexts[*i].clone());
        let out = model.push_forward(&d).unwrap();
        prop_assert!((out.total() - d.total()).abs() < 1e-9);

        let sub = Distribution::sub(d.iter().map(|(c, p)| (c.clone(), p * scale)).collect()).unwrap();
        prop_assert!((model.push_forward(&sub).unwrap().total() - sub.total()).abs() < 1e-9);

        let point = Distribution::point(contexts[which].clone());
        let expected = Distribution::point(model.evaluate(&contexts[which]).unwrap());
        prop_assert_eq!(model.push_forward(&point).unwrap(), expected);
        prop_assert_eq!(model.evaluate(&contexts[which]).unwrap(), model.evaluate(&contexts[which]).unwrap());

        let iv = Intervention::set([("A", "1")]);
        let once = model.apply_intervention(&iv).unwrap();
        prop_assert_eq!(once.apply_intervention(&iv).unwrap(), once);
    }

    #[test]
    fn coin_variants_round_trip(heads in 0u32..=100, k in 1usize..4) {
        let p = heads as f64 / 100.0;
        let mut doc = builtin("example4").unwrap();
        doc.simulator = casim_core::scenario::coin_simulator(&[("Heads", p), ("Tails", 1.0 - p)], Sampler::TopK(k)).unwrap();
        prop_assert_eq!(load_scenario(&save_scenario(&doc)).unwrap(), doc);
    }
}

#[test]
fn builtins_round_trip() {
    for name in builtin_names() {
        let doc = builtin(name).unwrap();
        assert_eq!(load_scenario(&save_scenario(&doc)).unwrap(), doc, "{name}");
    }
}

#[test]
fn exact_success_implies_approx_success() {
    for name in builtin_names() {
        let doc = builtin(name).unwrap();
        let exact = check_exact(&doc.observer, &doc.simulator).unwrap();
        if exact.verdict == Verdict::Simulates {
            for eps in [1e-9, 1e-3, 0.05, 1.0] {
                let approx = check_approx(&doc.observer, &doc.simulator, eps, DistanceKind::TotalVariation).unwrap();
                assert_eq!(approx.verdict, Verdict::Simulates, "{name} at {eps}");
            }
        }
    }
}
