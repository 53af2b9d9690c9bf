mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::select;
use thinmpi::composer::{minimal_cover, Strategy as CoverStrategy};
use thinmpi::layering::{
    assign_layers, average_layer_number, build_profile, FrequencyProfile, LayerAssignment, Policy, ProfileInput, Trace,
    Weighting,
};
use thinmpi::registry::{default_registry, load_registry, validate_blocks, Block, CaseSensitivity, Mode, Registry};
use thinmpi::scanner::{scan_text, strip_noise, strip_noise_with, Dialect, ScanOptions, UsageSet};
use thinmpi::stacksim::{build_stack, simulate_trace, StackKind, StackModel, StackParams};

fn names() -> Vec<String> {
    default_registry().functions().iter().map(|f| f.name.clone()).collect()
}

fn noisy_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            select(vec![
                "/*", "*/", "//", "\"", "'", "\\", "\n", "\r\n", " ", "(", ")", ";", "#", "!"
            ])
            .prop_map(String::from),
            "[A-Za-z_0-9 ]{1,6}",
            select(names()).prop_map(|n| format!("{n}(")),
        ],
        0..60,
    )
    .prop_map(|parts| parts.concat())
}

/// Self-contained fragments: every comment and literal is closed on its own line.
fn fragment() -> impl Strategy<Value = String> {
    let name = || select(names());
    prop_oneof![
        name().prop_map(|n| format!("{n}(x, y);")),
        name().prop_map(|n| format!("{n} (MPI_COMM_WORLD);")),
        name().prop_map(|n| format!("/* {n}( */ z = 1;")),
        name().prop_map(|n| format!("// {n}(")),
        name().prop_map(|n| format!("s = \"{n}(\\\"\";")),
        name().prop_map(|n| format!("p = &{n};")),
        "[a-z_]{1,8} = [0-9]{1,4};",
    ]
}

fn source() -> impl Strategy<Value = String> {
    proptest::collection::vec(fragment(), 0..12).prop_map(|lines| lines.join("\n"))
}

fn block_id(i: usize) -> String {
    format!("blk{i}")
}

/// Blocks over a small name pool, possibly violating registry invariants.
fn raw_blocks() -> impl Strategy<Value = Vec<Block>> {
    let pool: Vec<String> = (0..10).map(common::function_name).collect();
    proptest::collection::vec(
        (
            prop_oneof![4 => Just(None), 1 => select(vec!["", "9bad", "has space", "blk0"]).prop_map(Some)],
            proptest::collection::vec(
                prop_oneof![8 => select(pool.clone()), 1 => Just("bogus".to_owned())],
                0..5,
            ),
        ),
        0..5,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (id, members))| Block {
                id: id.map(String::from).unwrap_or_else(|| block_id(i)),
                label: format!("block {i}"),
                members,
            })
            .collect()
    })
}

/// A valid partition registry: `n` functions dealt into non-empty blocks.
fn partition_registry() -> impl Strategy<Value = Registry> {
    (1usize..=16)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec(0usize..5, n)))
        .prop_map(|(n, owner)| {
            let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for (f, b) in owner.into_iter().enumerate().take(n) {
                members.entry(b).or_default().push(common::function_name(f));
            }
            let blocks = members
                .into_iter()
                .map(|(b, members)| Block {
                    id: block_id(b),
                    label: String::new(),
                    members,
                })
                .collect();
            Registry::from_parts(Mode::Partition, CaseSensitivity::Sensitive, blocks, BTreeMap::new())
        })
}

fn overlap_case() -> impl Strategy<Value = u64> {
    any::<u64>()
}

fn profile() -> impl Strategy<Value = FrequencyProfile> {
    proptest::collection::btree_map(select(names()), 0u64..1_000_000, 1..30)
        .prop_filter("non-empty profile", |c| c.values().any(|&n| n > 0))
        .prop_map(|counts| FrequencyProfile {
            counts,
            sources: vec!["p".into()],
            weighting: Weighting::Sum,
        })
}

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::EqualCount), Just(Policy::MassQuantile)]
}

fn trace() -> impl Strategy<Value = BTreeMap<String, u64>> {
    proptest::collection::btree_map(select(names()), 0u64..100_000, 0..30)
}

fn layered_model(trace: &BTreeMap<String, u64>, layers: &[u32], depth: u32, layer_cost: f64) -> StackModel {
    let assignment = LayerAssignment {
        layers: trace
            .keys()
            .zip(layers.iter().cycle())
            .map(|(f, &l)| (f.clone(), l.clamp(1, depth)))
            .collect(),
        num_layers: depth,
        policy: Policy::EqualCount,
    };
    build_stack(
        StackKind::Layered,
        StackParams::Layers(assignment),
        layer_cost,
        &default_registry(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn strip_is_idempotent_and_keeps_lines(s in noisy_text()) {
        for dialect in [Dialect::C, Dialect::Fortran] {
            let once = strip_noise_with(&s, dialect).text;
            let twice = strip_noise_with(&once, dialect).text;
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.lines().count(), s.lines().count());
            prop_assert_eq!(once.matches('\n').count(), s.matches('\n').count());
        }
    }

    #[test]
    fn scan_distributes_over_concatenation(a in source(), b in source()) {
        let reg = default_registry();
        let opts = ScanOptions::default();
        let joined = scan_text(&format!("{a}\n{b}"), &reg, &opts).invoked;
        let mut union = scan_text(&a, &reg, &opts).invoked;
        union.extend(scan_text(&b, &reg, &opts).invoked);
        prop_assert_eq!(joined, union);
    }

    #[test]
    fn stripped_source_scans_the_same(a in source()) {
        let reg = default_registry();
        let opts = ScanOptions::default();
        let stripped = strip_noise(&a).text;
        prop_assert_eq!(scan_text(&stripped, &reg, &opts), scan_text(&a, &reg, &opts));
    }

    #[test]
    fn validate_agrees_with_load(blocks in raw_blocks(), overlap in any::<bool>()) {
        let mode = if overlap { Mode::Overlap } else { Mode::Partition };
        let reg = Registry::from_parts(mode, CaseSensitivity::Sensitive, blocks, BTreeMap::new());
        let diagnostics = validate_blocks(&reg);
        let loaded = load_registry(&reg.to_document());
        prop_assert_eq!(diagnostics.is_empty(), loaded.is_ok(), "{:?}", diagnostics);
        if let Ok(loaded) = loaded {
            prop_assert_eq!(&loaded, &reg);
        }
    }

    #[test]
    fn partition_registries_round_trip(reg in partition_registry()) {
        prop_assert!(validate_blocks(&reg).is_empty());
        let doc = reg.to_document();
        let loaded = load_registry(&doc).unwrap();
        prop_assert_eq!(&loaded, &reg);
        prop_assert_eq!(loaded.to_document(), doc);

        let sizes: usize = loaded.blocks().iter().map(|b| b.members.len()).sum();
        let union: BTreeSet<&String> = loaded.blocks().iter().flat_map(|b| &b.members).collect();
        let functions: BTreeSet<&String> = loaded.functions().iter().map(|f| &f.name).collect();
        prop_assert_eq!(sizes, functions.len());
        prop_assert_eq!(union, functions);
    }

    #[test]
    fn lookup_is_deterministic(id in "MPI_[A-Za-z_]{1,12}|mpi_send|MPI_SEND|MPI_Send") {
        let reg = default_registry();
        let ci = reg.with_case_sensitivity(CaseSensitivity::Insensitive).unwrap();
        prop_assert_eq!(reg.lookup(&id), reg.lookup(&id));
        prop_assert_eq!(ci.lookup(&id), ci.lookup(&id));
        if let Some(rec) = reg.lookup(&id) {
            prop_assert_eq!(ci.lookup(&id).map(|r| &r.name), Some(&rec.name));
        }
    }

    #[test]
    fn partition_strategies_agree(reg in partition_registry(), pick in any::<u64>()) {
        let usage: Vec<String> = reg
            .functions()
            .iter()
            .enumerate()
            .filter(|(i, _)| pick >> (i % 64) & 1 == 1)
            .map(|(_, f)| f.name.clone())
            .collect();
        let usage = UsageSet::from_names("p", usage);
        let exact = minimal_cover(&usage, &reg, CoverStrategy::Exact).unwrap();
        let greedy = minimal_cover(&usage, &reg, CoverStrategy::Greedy).unwrap();
        prop_assert_eq!(&exact.selected_blocks, &greedy.selected_blocks);
        prop_assert!(usage.invoked.is_subset(&exact.covered_functions));
    }

    #[test]
    fn cover_is_sound_and_monotone(seed in overlap_case()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let case = common::random_cover_case(&mut rng, 12, 24);
        let universe: Vec<String> = case.registry.functions().iter().map(|f| f.name.clone()).collect();
        for strategy in [CoverStrategy::Exact, CoverStrategy::Greedy] {
            let base = minimal_cover(&UsageSet::from_names("o", &case.usage), &case.registry, strategy).unwrap();
            prop_assert!(case.usage.iter().all(|f| base.covered_functions.contains(f)));
            if strategy == CoverStrategy::Exact {
                for extra in universe.iter().filter(|f| !case.usage.contains(*f)) {
                    let mut bigger = case.usage.clone();
                    bigger.insert(extra.clone());
                    let grown = minimal_cover(&UsageSet::from_names("o", &bigger), &case.registry, strategy).unwrap();
                    prop_assert!(grown.m >= base.m);
                }
            }
        }
    }

    #[test]
    fn layers_are_monotone_in_frequency(p in profile(), l in 1u32..8, policy in policy()) {
        let reg = default_registry();
        let a = assign_layers(&p, l, policy, Some(&reg)).unwrap();
        prop_assert_eq!(a.layers.len(), reg.functions().len());
        for (f, &layer) in &a.layers {
            prop_assert!((1..=l).contains(&layer), "{} at {}", f, layer);
        }
        for (f, &cf) in &p.counts {
            for (g, &cg) in &p.counts {
                if cf > cg {
                    prop_assert!(a.layers[f] <= a.layers[g], "{}={} vs {}={}", f, cf, g, cg);
                }
            }
        }
    }

    #[test]
    fn assigned_average_is_rearrangement_optimal(p in profile(), l in 1u32..8, policy in policy(), swaps in proptest::collection::vec((0usize..64, 0usize..64), 1..64)) {
        let a = assign_layers(&p, l, policy, None).unwrap();
        let avg = average_layer_number(&a, &p).unwrap();
        let names: Vec<&String> = p.counts.keys().collect();
        let mut layers: Vec<u32> = names.iter().map(|f| a.layers[*f]).collect();
        for (i, j) in swaps {
            let n = layers.len();
            layers.swap(i % n, j % n);
        }
        let shuffled: BTreeMap<String, u32> = names.iter().map(|f| (*f).clone()).zip(layers).collect();
        let other = common::mean_layer(&p.counts, &shuffled);
        prop_assert!(avg <= other * (1.0 + 1e-9), "{} > {}", avg, other);
    }

    #[test]
    fn average_never_exceeds_conventional_depth(p in profile(), l in 2u32..8, extra in 0u32..4, policy in policy()) {
        let conventional = l + extra;
        let a = assign_layers(&p, l, policy, None).unwrap();
        let avg = average_layer_number(&a, &p).unwrap();
        prop_assert!(avg <= conventional as f64);
        let below = p.counts.iter().any(|(f, &c)| c > 0 && a.layers[f] < conventional);
        if below {
            prop_assert!(avg < conventional as f64);
        }
    }

    #[test]
    fn layering_is_scale_invariant(p in profile(), l in 1u32..8, policy in policy(), c in 1u64..1000) {
        let scaled = FrequencyProfile {
            counts: p.counts.iter().map(|(f, &n)| (f.clone(), n * c)).collect(),
            ..p.clone()
        };
        let a = assign_layers(&p, l, policy, None).unwrap();
        let b = assign_layers(&scaled, l, policy, None).unwrap();
        prop_assert_eq!(&a, &b);
        let x = average_layer_number(&a, &p).unwrap();
        let y = average_layer_number(&b, &scaled).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x);
    }

    #[test]
    fn profile_merging_is_order_independent(traces in proptest::collection::vec(trace(), 1..5), normalized in any::<bool>()) {
        let reg = default_registry();
        let weighting = if normalized { Weighting::PerAppNormalized } else { Weighting::Sum };
        let inputs: Vec<ProfileInput> = traces
            .iter()
            .enumerate()
            .map(|(i, t)| Trace::new(format!("app{i}"), t.iter().map(|(f, &n)| (f.clone(), n))).into())
            .collect();
        let mut reversed = inputs.clone();
        reversed.reverse();
        let forward = build_profile(&inputs, &reg, weighting);
        let backward = build_profile(&reversed, &reg, weighting);
        match (forward, backward) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.counts, &b.counts);
                if !normalized {
                    let mut sum: BTreeMap<String, u64> = BTreeMap::new();
                    for t in &traces {
                        for (f, &n) in t {
                            *sum.entry(f.clone()).or_default() += n;
                        }
                    }
                    prop_assert_eq!(a.counts, sum);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn simulation_is_additive(t in trace(), split in any::<u64>(), layers in proptest::collection::vec(1u32..8, 1..8), eighths in 1u32..64) {
        let layer_cost = eighths as f64 / 8.0;
        let model = layered_model(&t, &layers, 8, layer_cost);
        let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
        for (i, (f, &n)) in t.iter().enumerate() {
            let k = n.min(split.rotate_left(i as u32) % (n + 1));
            a.insert(f.clone(), k);
            b.insert(f.clone(), n - k);
        }
        let whole = simulate_trace(&t, &model).unwrap().total_cost;
        let parts = simulate_trace(&a, &model).unwrap().total_cost + simulate_trace(&b, &model).unwrap().total_cost;
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn simulation_is_additive_for_general_costs(t in trace(), split in any::<u64>(), layer_cost in 0.001f64..1000.0) {
        let model = build_stack(StackKind::Conventional, StackParams::Depth(3), layer_cost, &default_registry()).unwrap();
        let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
        for (f, &n) in &t {
            let k = split % (n + 1);
            a.insert(f.clone(), k);
            b.insert(f.clone(), n - k);
        }
        let whole = simulate_trace(&t, &model).unwrap().total_cost;
        let parts = simulate_trace(&a, &model).unwrap().total_cost + simulate_trace(&b, &model).unwrap().total_cost;
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
    }

    #[test]
    fn zero_attribute_totals_are_homogeneous(t in trace(), layers in proptest::collection::vec(1u32..6, 1..8), c in 0.01f64..100.0, k in -6i32..6) {
        let reg = default_registry();
        for scale in [c, 2f64.powi(k)] {
            let models = [
                (build_stack(StackKind::Conventional, StackParams::Depth(4), 1.5, &reg).unwrap(),
                 build_stack(StackKind::Conventional, StackParams::Depth(4), 1.5 * scale, &reg).unwrap()),
                (layered_model(&t, &layers, 5, 1.5), layered_model(&t, &layers, 5, 1.5 * scale)),
            ];
            for (base, scaled) in models {
                let x = simulate_trace(&t, &base).unwrap().total_cost;
                let y = simulate_trace(&t, &scaled).unwrap().total_cost;
                if scale.log2().fract() == 0.0 {
                    prop_assert_eq!(y, x * scale);
                } else {
                    prop_assert!((y - x * scale).abs() <= 1e-12 * y.max(1.0));
                }
            }
        }
    }

    #[test]
    fn stacks_are_ordered(t in trace(), layers in proptest::collection::vec(1u32..9, 1..8), depth in 1u32..9, eighths in 1u32..64) {
        let reg = default_registry();
        let layer_cost = eighths as f64 / 8.0;
        let conventional = build_stack(StackKind::Conventional, StackParams::Depth(depth), layer_cost, &reg).unwrap();
        let layered = layered_model(&t, &layers, depth, layer_cost);
        let protocol = build_stack(StackKind::PerFunctionProtocol, StackParams::Attributes(Default::default()), layer_cost, &reg).unwrap();
        let total = |m: &StackModel| simulate_trace(&t, m).unwrap().total_cost;
        let (c, l, p) = (total(&conventional), total(&layered), total(&protocol));
        prop_assert!(p <= l && l <= c);
        if t.iter().any(|(f, &n)| n > 0 && layered.depth[f] < depth) {
            prop_assert!(l < c);
        }
        if t.iter().any(|(f, &n)| n > 0 && layered.depth[f] > 1) {
            prop_assert!(p < l);
        }
    }
}
