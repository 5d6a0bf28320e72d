mod common;

use std::collections::HashSet;

use common::ContextFree;

use proptest::prelude::*;

use fixsynth::analyze::{apply_script, diff_lists, furthest_distance_from_end};
use fixsynth::dsl::{eval_position, parse, regex_matches, Delimiter, Expression, Pattern, Position, RegexToken};
use fixsynth::rng::Rng;
use fixsynth::search::beam_search;
use fixsynth::taskgen::{generate_task, read_tasks, sample_program, write_tasks, GenConfig};
use fixsynth::vocab::{encode_triplet, program_to_tokens, tokens_to_program, Executed, EOS, TRIPLET_WIDTH};

fn gen(max_expressions: usize, max_io_len: usize) -> GenConfig {
    GenConfig {
        max_expressions,
        max_io_len,
        ..GenConfig::default()
    }
}

fn printable() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[ -~]{0,30}").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn render_parse_and_tokens_round_trip(seed in any::<u64>()) {
        let p = sample_program(&mut Rng::from_key(seed), &GenConfig::default());
        prop_assert_eq!(&parse(&p.render()).unwrap(), &p);
        let toks = program_to_tokens(&p).unwrap();
        prop_assert_eq!(toks.ids().last().copied(), Some(EOS));
        prop_assert_eq!(&tokens_to_program(&toks).unwrap(), &p);
    }

    #[test]
    fn execution_is_pure(seed in any::<u64>(), input in printable()) {
        let p = sample_program(&mut Rng::from_key(seed), &GenConfig::default());
        prop_assert_eq!(p.execute(&input), p.execute(&input));
    }

    #[test]
    fn matches_are_sorted_disjoint_and_in_bounds(input in printable(), which in 0usize..8, delim in 0usize..20) {
        let pats = [Pattern::Token(RegexToken::ALL[which]), Pattern::Literal(Delimiter::from_index(delim % Delimiter::all().count()).unwrap())];
        for pat in pats {
            let ms = regex_matches(pat, &input);
            for (s, e) in &ms {
                prop_assert!(s < e && *e <= input.len());
            }
            for w in ms.windows(2) {
                prop_assert!(w[0].1 <= w[1].0);
            }
        }
    }

    #[test]
    fn positions_land_inside_the_string(input in printable(), k in -5i8..=5, which in 0usize..8, start in any::<bool>(), n in -20i8..=20) {
        let boundary = if start { fixsynth::dsl::Boundary::Start } else { fixsynth::dsl::Boundary::End };
        let pos = Position::Regex { pattern: Pattern::Token(RegexToken::ALL[which]), k, boundary };
        if let Ok(at) = eval_position(&pos, &input) {
            prop_assert!(at <= input.len());
        }
        if let Ok(at) = eval_position(&Position::ConstPos(n), &input) {
            prop_assert!(at <= input.len());
        }
        if n < 0 {
            let len = input.len() as i64;
            let mirror = len + n as i64 + 1;
            if (0..=i8::MAX as i64).contains(&mirror) {
                prop_assert_eq!(
                    eval_position(&Position::ConstPos(n), &input),
                    eval_position(&Position::ConstPos(mirror as i8), &input)
                );
            }
        }
    }

    #[test]
    fn triplets_have_constant_width(i in printable(), o in printable(), e in proptest::option::of(printable())) {
        let executed = match &e {
            Some(s) => Executed::Output(s),
            None => Executed::Fail,
        };
        prop_assert_eq!(encode_triplet(&i, &o, executed).unwrap().len(), TRIPLET_WIDTH);
    }

    #[test]
    fn generated_tasks_reexecute(seed in any::<u64>(), max_e in 1usize..=4, io in 8usize..=40) {
        let cfg = gen(max_e, io);
        let task = generate_task(&mut Rng::from_key(seed), &cfg);
        prop_assert!(task.program.len() <= max_e);
        for ex in &task.examples {
            prop_assert!(ex.input.len() <= io && ex.output.len() <= io);
            prop_assert_eq!(&task.program.execute(&ex.input).unwrap(), &ex.output);
        }
    }

    #[test]
    fn corpus_files_round_trip(seed in any::<u64>(), n in 0usize..6) {
        let mut rng = Rng::from_key(seed);
        let tasks: Vec<_> = (0..n).map(|_| generate_task(&mut rng, &gen(3, 20))).collect();
        let mut buf = Vec::new();
        write_tasks(&tasks, &mut buf).unwrap();
        prop_assert_eq!(read_tasks(&buf[..]).unwrap(), tasks);
    }

    #[test]
    fn diffs_apply_and_stay_in_range(a in proptest::collection::vec(0usize..4, 0..7), b in proptest::collection::vec(0usize..4, 0..7)) {
        let e = |k: &usize| Expression::ConstStr(Delimiter::from_index(*k).unwrap());
        let ea: Vec<Expression> = a.iter().map(e).collect();
        let eb: Vec<Expression> = b.iter().map(e).collect();
        let script = diff_lists(&ea, &eb);
        prop_assert_eq!(apply_script(&ea, &script), eb);
        prop_assert!(script.len() <= a.len().max(b.len()));
        prop_assert!(furthest_distance_from_end(&script, a.len()) <= a.len());
        prop_assert_eq!(&diff_lists(&ea, &ea), &Vec::new());
    }

    #[test]
    fn beam_is_exact_on_context_free_decoders(seed in any::<u64>(), width in 1usize..10) {
        let d = ContextFree::random(seed, 3, 4);
        let got = beam_search(&d, width, 4);
        let mut all = d.enumerate();
        all.truncate(width);
        prop_assert_eq!(got.len(), all.len());
        for (g, w) in got.iter().zip(&all) {
            prop_assert_eq!(&g.0.0, &w.0);
            prop_assert!((g.1 - w.1).abs() < 1e-12);
        }
        let distinct: HashSet<_> = got.iter().map(|g| g.0.clone()).collect();
        prop_assert_eq!(distinct.len(), got.len());
    }
}

#[test]
fn sampling_covers_every_grammar_alternative() {
    let mut rng = Rng::from_key(2024);
    let cfg = GenConfig::default();
    let mut tokens = HashSet::new();
    let mut delims = HashSet::new();
    let (mut start, mut end, mut pos_k, mut neg_k, mut pos_n, mut neg_n) = (false, false, false, false, false, false);
    for _ in 0..100_000 {
        for e in sample_program(&mut rng, &cfg).expressions() {
            match e {
                Expression::ConstStr(d) => {
                    delims.insert(d.index());
                }
                Expression::SubStr(a, b) => {
                    for p in [a, b] {
                        match p {
                            Position::Regex { pattern, k, boundary } => {
                                match pattern {
                                    Pattern::Token(t) => {
                                        tokens.insert(*t);
                                    }
                                    Pattern::Literal(d) => {
                                        delims.insert(d.index());
                                    }
                                }
                                pos_k |= *k > 0;
                                neg_k |= *k < 0;
                                start |= *boundary == fixsynth::dsl::Boundary::Start;
                                end |= *boundary == fixsynth::dsl::Boundary::End;
                            }
                            Position::ConstPos(n) => {
                                pos_n |= *n >= 0;
                                neg_n |= *n < 0;
                            }
                        }
                    }
                }
            }
        }
    }
    assert_eq!(tokens.len(), RegexToken::ALL.len());
    assert_eq!(delims.len(), Delimiter::all().count());
    assert!(start && end && pos_k && neg_k && pos_n && neg_n);
}
