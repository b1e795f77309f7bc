//! Scenario files for `simulate`.
//!
//! ```json
//! {
//!   "name": "...",
//!   "events": [{"id": "1", "vector": {"labels": [...], "amps": [[re, im], ...]}}],
//!   "cuts": {"past": ["1", "2"]},
//!   "alternative_sets": [{
//!     "name": "...", "cut": "past", "exhaustive": true,
//!     "alternatives": [{"name": "...", "events": [
//!       {"id": "4", "c": [1, 0], "bra": [<vector>, ...], "ket": <vector>}
//!     ]}]
//!   }]
//! }
//! ```
//!
//! Each alternative set is evaluated on the initial history at its cut (the
//! full initial cut when `cut` is absent). One realized history is then
//! sampled by drawing from the sets in order, each evaluated at its cut
//! extended by the events realized so far.

use std::collections::BTreeMap;
use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use qevents_core::dynamics::{alternative_probabilities, chain_rule_defect, realize_alternative};
use qevents_core::graph::HistoryDoc;
use qevents_core::rng::replica_rng;
use qevents_core::{
    cut_state, Alternative, AlternativeSet, CandidateEvent, Cut, DynamicsError, EventId, ExtensionSampler, History,
    LabeledVector, Region,
};

use crate::{csv_table, num, report, CliError, Common, Output, Result};

/// Largest acceptable chain-rule defect in the self-check.
pub const CHAIN_RULE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub events: Vec<InitialEvent>,
    #[serde(default)]
    pub cuts: BTreeMap<String, Vec<EventId>>,
    pub alternative_sets: Vec<AlternativeSetDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEvent {
    pub id: EventId,
    pub vector: LabeledVector,
    #[serde(default)]
    pub region: Option<Region>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeSetDoc {
    pub name: String,
    #[serde(default)]
    pub cut: Option<String>,
    #[serde(default = "yes")]
    pub exhaustive: bool,
    pub alternatives: Vec<AlternativeDoc>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeDoc {
    pub name: String,
    pub events: Vec<CandidateEvent>,
}

/// A scenario with its history built and cuts resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub history: History,
    pub sets: Vec<(String, Cut, AlternativeSet)>,
}

pub fn parse(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Usage(format!(
            "scenario parse error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

pub fn prepare(s: &Scenario) -> Result<Prepared> {
    let invalid = |m: String| CliError::Usage(format!("invalid scenario: {m}"));
    let mut history = History::new();
    for e in &s.events {
        history
            .add_initial_event_with_id(e.id.clone(), e.vector.clone(), e.region)
            .map_err(|err| invalid(format!("event {}: {err}", e.id)))?;
    }
    let full = history.full_cut();
    let mut sets = Vec::with_capacity(s.alternative_sets.len());
    for set in &s.alternative_sets {
        let cut = match &set.cut {
            None => full.clone(),
            Some(name) => {
                let ids = s
                    .cuts
                    .get(name)
                    .ok_or_else(|| invalid(format!("set {}: unknown cut {name}", set.name)))?;
                Cut::new(ids.iter().cloned())
            }
        };
        history
            .validate_cut(&cut)
            .map_err(|err| invalid(format!("set {}: {err}", set.name)))?;
        let alts = set
            .alternatives
            .iter()
            .map(|a| Alternative::new(a.name.clone(), a.events.clone()))
            .collect();
        sets.push((
            set.name.clone(),
            cut,
            AlternativeSet {
                alternatives: alts,
                exhaustive: set.exhaustive,
            },
        ));
    }
    Ok(Prepared {
        name: s.name.clone(),
        history,
        sets,
    })
}

fn dynamics_error(set: &str, e: DynamicsError) -> CliError {
    match e {
        DynamicsError::NotExhaustive { sum } => CliError::Invariant(format!(
            "alternative set {set} is declared exhaustive but its probabilities sum to {sum}"
        )),
        DynamicsError::ExceedsUnity { sum } => {
            CliError::Invariant(format!("alternative set {set} has probabilities summing to {sum}"))
        }
        other => CliError::Usage(format!("invalid scenario: set {set}: {other}")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlternativeResult {
    pub name: String,
    pub probability: f64,
    pub count: u64,
    pub frequency: f64,
    pub chain_rule_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SetResult {
    pub name: String,
    pub cut: Vec<EventId>,
    pub exhaustive: bool,
    pub probability_sum: f64,
    pub alternatives: Vec<AlternativeResult>,
    pub max_deviation: f64,
    pub within_three_sigma: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledStep {
    pub set: String,
    pub alternative: String,
    pub probability: f64,
    pub realized: Vec<EventId>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario file (JSON).
    pub scenario: std::path::PathBuf,
}

/// Analytic probabilities, sampled frequencies and chain-rule checks for
/// every set.
pub fn evaluate(p: &Prepared, runs: u64, seed: u64, replicas: u64) -> Result<Vec<SetResult>> {
    p.sets
        .iter()
        .enumerate()
        .map(|(i, (name, cut, alts))| {
            let state = cut_state(&p.history, cut).map_err(|e| dynamics_error(name, e))?;
            let probs = alternative_probabilities(&state, alts).map_err(|e| dynamics_error(name, e))?;
            // Non-exhaustive sets sample an extra "none of these" outcome.
            let mut weights = probs.clone();
            let rest = 1.0 - probs.iter().sum::<f64>();
            if !alts.exhaustive {
                weights.push(rest.max(0.0));
            }
            let sampler = ExtensionSampler::from_probabilities(weights).map_err(|e| dynamics_error(name, e))?;
            let counts = sampler.counts(runs, seed.wrapping_add(i as u64), replicas);
            let alternatives = alts
                .alternatives
                .iter()
                .zip(&probs)
                .zip(&counts)
                .map(|((a, &probability), &count)| {
                    let chain = chain_rule_defect(&p.history, cut, &a.events).map_err(|e| dynamics_error(name, e))?;
                    Ok(AlternativeResult {
                        name: a.name.clone(),
                        probability,
                        count,
                        frequency: if runs == 0 { 0.0 } else { count as f64 / runs as f64 },
                        chain_rule_defect: chain,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let max_deviation = alternatives
                .iter()
                .map(|a| (a.probability - a.frequency).abs())
                .fold(0.0, f64::max);
            Ok(SetResult {
                name: name.clone(),
                cut: cut.past.iter().cloned().collect(),
                exhaustive: alts.exhaustive,
                probability_sum: probs.iter().sum(),
                within_three_sigma: crate::within_three_sigma(&counts[..probs.len()], &probs, runs),
                alternatives,
                max_deviation,
            })
        })
        .collect()
}

/// Draws one alternative per set in order and realizes it. Stops at the
/// first set with no realizable outcome.
pub fn sample_history(p: &Prepared, seed: u64) -> Result<(Vec<SampledStep>, History)> {
    let mut rng = replica_rng(seed, u64::MAX);
    let mut history = p.history.clone();
    let mut realized: Vec<EventId> = Vec::new();
    let mut steps = Vec::new();
    for (name, cut, alts) in &p.sets {
        let mut cut = cut.clone();
        for id in &realized {
            cut = cut.with(id.clone());
        }
        if history.validate_cut(&cut).is_err() {
            break;
        }
        let state = cut_state(&history, &cut).map_err(|e| dynamics_error(name, e))?;
        let probs = match alternative_probabilities(&state, alts) {
            Ok(p) => p,
            Err(_) => break,
        };
        let mut weights = probs.clone();
        if !alts.exhaustive {
            weights.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
        }
        let sampler = ExtensionSampler::from_probabilities(weights).map_err(|e| dynamics_error(name, e))?;
        let k = sampler.draw(&mut rng);
        if k >= alts.alternatives.len() {
            steps.push(SampledStep {
                set: name.clone(),
                alternative: String::new(),
                probability: sampler.probabilities()[k],
                realized: Vec::new(),
            });
            continue;
        }
        let alt = &alts.alternatives[k];
        let (ids, _) = match realize_alternative(&mut history, &cut, alt) {
            Ok(r) => r,
            Err(_) => break,
        };
        realized.extend(ids.iter().cloned());
        steps.push(SampledStep {
            set: name.clone(),
            alternative: alt.name.clone(),
            probability: probs[k],
            realized: ids,
        });
    }
    Ok((steps, history))
}

pub fn run_simulate(common: &Common, args: &SimulateArgs) -> Result<Output> {
    let text = read(&args.scenario)?;
    let prepared = prepare(&parse(&text)?)?;
    let sets = evaluate(&prepared, common.runs, common.seed, common.replicas)?;
    let max_chain = sets
        .iter()
        .flat_map(|s| s.alternatives.iter().map(|a| a.chain_rule_defect))
        .fold(0.0, f64::max);
    if max_chain > CHAIN_RULE_TOL {
        return Err(CliError::Invariant(format!("chain-rule self-check failed: defect {max_chain:e}")));
    }
    let (steps, history) = sample_history(&prepared, common.seed)?;
    let csv = csv_table(
        &["set", "alternative", "probability", "count", "frequency", "chain_rule_defect"],
        sets.iter().flat_map(|s| {
            s.alternatives.iter().map(move |a| {
                vec![
                    s.name.clone(),
                    a.name.clone(),
                    num(a.probability),
                    a.count.to_string(),
                    num(a.frequency),
                    num(a.chain_rule_defect),
                ]
            })
        }),
    );
    let results = json!({
        "scenario": prepared.name,
        "sets": sets,
        "chain_rule": { "max_defect": max_chain, "tolerance": CHAIN_RULE_TOL, "passed": true },
        "sample": { "steps": steps, "history": HistoryDoc::from(history) },
    });
    Ok(Output {
        report: report("simulate", common, args, &results),
        csv,
        side_files: Vec::new(),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}
