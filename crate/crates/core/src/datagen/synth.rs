use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{DatagenError, Generator, Provenance, RawInstruction, Synthesized};
use crate::env::game24::oracle_solve;
use crate::env::shop::{render as render_shop_page, Catalog, GoalRecord, Phase, ShopEnv, ShopState};
use crate::env::shop_fixture::goal_for;
use crate::env::{Game24Env, Puzzle};
use crate::policy::prompt::{self, vars, PromptTemplate};
use crate::trajectory::Instruction;

/// Which puzzles template mode may draw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Game24Source {
    /// Redraw unsolvable puzzles.
    pub solvable_only: bool,
    /// Multisets never drawn, e.g. a held-out evaluation suite.
    pub exclude: BTreeSet<Puzzle>,
}

fn instruction(id: &str, text: &str) -> Result<Instruction, DatagenError> {
    Instruction::new(id, text).map_err(|e| DatagenError::Invalid(e.to_string()))
}

fn check_count(m: usize) -> Result<(), DatagenError> {
    if m == 0 {
        return Err(DatagenError::Invalid("instruction count must be at least 1".into()));
    }
    Ok(())
}

/// Output of a synthesis run.
pub struct SynthesisOutput<E> {
    pub items: Vec<Synthesized<E>>,
    /// LLM replies that could not be used.
    pub failures: usize,
    pub tokens: u64,
}

fn draw_puzzle<R: Rng>(rng: &mut R, source: &Game24Source) -> Puzzle {
    loop {
        let numbers: Vec<i64> = (0..4).map(|_| rng.random_range(1..=13)).collect();
        let p = Puzzle::new(&numbers).expect("drawn in range");
        if source.exclude.contains(&p.canonical()) {
            continue;
        }
        if source.solvable_only && !oracle_solve(&p).solvable {
            continue;
        }
        return p;
    }
}

/// `m` Game of 24 instructions. Template mode draws puzzles from
/// `derive(seed, "instructions", 0)`; LLM mode asks for a new input per
/// item, showing a drawn puzzle as the one to differ from.
pub fn synthesize_game24(
    generator: &Generator,
    m: usize,
    seed: u64,
    source: &Game24Source,
) -> Result<SynthesisOutput<Game24Env>, DatagenError> {
    check_count(m)?;
    if source.exclude.len() >= 1820 {
        return Err(DatagenError::Invalid("every puzzle is excluded".into()));
    }
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "instructions", 0));
    let mut out = SynthesisOutput {
        items: Vec::with_capacity(m),
        failures: 0,
        tokens: 0,
    };
    for i in 0..m {
        let id = format!("g24-{i:05}");
        let drawn = draw_puzzle(&mut rng, source);
        let (text, provenance) = match generator {
            Generator::Template => (drawn.instruction_text(), Provenance::Template),
            Generator::Llm(client) => {
                let messages = PromptTemplate::builtin(prompt::INSTRUCTION_GAME24)
                    .render(&vars([("observation", drawn.to_string())]));
                let completion = client.complete(&messages, 1.0, Some(crate::seed::derive(seed, "llm", i as u64)))?;
                out.tokens += completion.tokens_or_estimate(&messages);
                (completion.text.trim().to_string(), Provenance::Llm)
            }
        };
        let puzzle = text
            .lines()
            .find_map(|l| Puzzle::from_instruction(l).ok())
            .filter(|p| !source.exclude.contains(&p.canonical()));
        let Some(puzzle) = puzzle else {
            log::warn!("{id}: no usable puzzle in `{text}`");
            out.failures += 1;
            continue;
        };
        let env = Game24Env::with_instruction(puzzle, instruction(&id, &text)?);
        out.items.push(Synthesized {
            raw: RawInstruction { id, text, provenance },
            env,
        });
    }
    Ok(out)
}

/// `m` shop instructions. Each item samples a product; template mode asks
/// for a goal that product satisfies, LLM mode shows the endpoint the
/// product's page and keeps that goal as the task's ground truth.
pub fn synthesize_shop(
    catalog: &Arc<Catalog>,
    generator: &Generator,
    m: usize,
    seed: u64,
) -> Result<SynthesisOutput<ShopEnv>, DatagenError> {
    check_count(m)?;
    if catalog.is_empty() {
        return Err(DatagenError::Invalid("catalog is empty".into()));
    }
    let mut rng = crate::seed::rng(crate::seed::derive(seed, "instructions", 0));
    let mut out = SynthesisOutput {
        items: Vec::with_capacity(m),
        failures: 0,
        tokens: 0,
    };
    for i in 0..m {
        let id = format!("shop-{i:05}");
        let product = catalog.products().choose(&mut rng).expect("non-empty");
        let goal = goal_for(product, &mut rng);
        let (text, provenance) = match generator {
            Generator::Template => (goal.instruction_text(), Provenance::Template),
            Generator::Llm(client) => {
                let page = ShopState {
                    phase: Phase::ProductPage {
                        id: product.id.clone(),
                        chosen: BTreeMap::new(),
                    },
                    last_query: String::new(),
                    results: vec![product.id.clone()],
                };
                let observation = render_shop_page(&page, catalog, "");
                let messages = PromptTemplate::builtin(prompt::INSTRUCTION_SHOP).render(&vars([("observation", observation)]));
                let completion = client.complete(&messages, 1.0, Some(crate::seed::derive(seed, "llm", i as u64)))?;
                out.tokens += completion.tokens_or_estimate(&messages);
                (completion.text.trim().to_string(), Provenance::Llm)
            }
        };
        if text.is_empty() {
            out.failures += 1;
            continue;
        }
        let record = GoalRecord {
            instruction: text.clone(),
            goal,
        };
        let env = ShopEnv::from_record(catalog.clone(), &record, id.clone()).map_err(|e| DatagenError::Invalid(e.to_string()))?;
        out.items.push(Synthesized {
            raw: RawInstruction { id, text, provenance },
            env,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::shop_fixture::synthetic_catalog;
    use crate::policy::{ChatClient, EndpointConfig};
    use crate::testing::StubServer;
    use crate::trajectory::Environment;

    #[test]
    fn template_puzzles_are_reproducible_and_in_range() {
        let a = synthesize_game24(&Generator::Template, 3, 11, &Game24Source::default()).unwrap();
        let b = synthesize_game24(&Generator::Template, 3, 11, &Game24Source::default()).unwrap();
        let texts = |o: &SynthesisOutput<Game24Env>| o.items.iter().map(|s| s.raw.text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&a), texts(&b));
        assert_eq!(a.items.len(), 3);
        for s in &a.items {
            assert!(s.raw.text.starts_with("Input: "));
            assert!(s.env.puzzle().numbers().iter().all(|n| (1..=13).contains(n)));
            assert_eq!(s.raw.provenance, Provenance::Template);
        }
        assert_ne!(texts(&a), texts(&synthesize_game24(&Generator::Template, 3, 12, &Game24Source::default()).unwrap()));
    }

    #[test]
    fn solvable_only_and_exclusions_hold() {
        let exclude: BTreeSet<Puzzle> = crate::env::game24::all_puzzles().into_iter().take(1500).collect();
        let source = Game24Source {
            solvable_only: true,
            exclude: exclude.clone(),
        };
        let out = synthesize_game24(&Generator::Template, 50, 0, &source).unwrap();
        for s in &out.items {
            assert!(oracle_solve(s.env.puzzle()).solvable);
            assert!(!exclude.contains(&s.env.puzzle().canonical()));
        }
        assert!(synthesize_game24(&Generator::Template, 0, 0, &source).is_err());
    }

    #[test]
    fn template_shop_goals_are_satisfiable() {
        let catalog = Arc::new(synthetic_catalog(80, 5));
        let out = synthesize_shop(&catalog, &Generator::Template, 40, 2).unwrap();
        assert_eq!(out.items.len(), 40);
        for s in &out.items {
            let goal = s.env.goal();
            // brute-force scan over products and option picks
            let satisfiable = catalog.products().iter().any(|p| {
                let chosen: Option<BTreeMap<String, String>> = goal
                    .required_options
                    .iter()
                    .map(|(g, v)| {
                        p.options
                            .get(g)
                            .and_then(|vals| vals.iter().find(|x| x.eq_ignore_ascii_case(v)))
                            .map(|x| (g.clone(), x.clone()))
                    })
                    .collect();
                chosen.is_some_and(|c| goal.satisfied_by(p, &c))
            });
            assert!(satisfiable, "{}", s.raw.text);
            assert_eq!(s.env.instruction().text, s.raw.text);
        }
    }

    #[test]
    fn llm_mode_uses_the_reply() {
        let reply = r#"{"choices":[{"message":{"content":"Input: 2 3 4 6"}}],"usage":{"total_tokens":57}}"#;
        let server = StubServer::start(vec![(200, reply.to_string())]);
        let client = Arc::new(ChatClient::new(EndpointConfig::new(server.url(""), "stub")));
        let out = synthesize_game24(&Generator::Llm(client), 1, 0, &Game24Source::default()).unwrap();
        assert_eq!(out.items[0].raw.text, "Input: 2 3 4 6");
        assert_eq!(out.items[0].raw.provenance, Provenance::Llm);
        assert_eq!(out.tokens, 57);
        let body: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
        let last = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
        assert!(last.contains("different from"));
    }

    #[test]
    fn unusable_llm_reply_is_counted() {
        let reply = r#"{"choices":[{"message":{"content":"I cannot do that"}}]}"#;
        let server = StubServer::start(vec![(200, reply.to_string())]);
        let client = Arc::new(ChatClient::new(EndpointConfig::new(server.url(""), "stub")));
        let out = synthesize_game24(&Generator::Llm(client), 1, 0, &Game24Source::default()).unwrap();
        assert!(out.items.is_empty());
        assert_eq!(out.failures, 1);
        assert!(out.tokens > 0);
    }

    #[test]
    fn llm_shop_instruction_is_the_reply() {
        let reply = r#"{"choices":[{"message":{"content":"i need a red mug under 30 dollars"}}]}"#;
        let server = StubServer::start(vec![(200, reply.to_string())]);
        let client = Arc::new(ChatClient::new(EndpointConfig::new(server.url(""), "stub")));
        let catalog = Arc::new(synthetic_catalog(20, 1));
        let out = synthesize_shop(&catalog, &Generator::Llm(client), 1, 0).unwrap();
        assert_eq!(out.items[0].raw.text, "i need a red mug under 30 dollars");
    }
}
