use std::collections::BTreeMap;

use clique_ust::doubling::run_doubling;
use clique_ust::graph::{transition_matrix, Edge, Graph};
use clique_ust::oracles::enumerate_spanning_trees;
use clique_ust::sim::{ClusterState, LabelStats};
use clique_ust::stats::{chi_square, tally, tv_to_target};
use clique_ust::tree::{aldous_broder_reference, TreeSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Algorithm, ExperimentConfig};
use crate::cover::tree_via_doubling;
use crate::report::{
    chi_square_threshold, write_outputs, ChiSquare, LedgerSummary, LoadSummary, PhaseSummary, Report, RunRecord,
};
use crate::BenchError;

/// A finished experiment: the report plus one record per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub report: Report,
    pub records: Vec<RunRecord>,
}

/// Trees print as their sorted 1-based edges.
pub fn tree_key(edges: &[Edge]) -> String {
    edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
}

/// Runs `cfg.runs` trials, trial `i` seeded with `cfg.seed + i`, each on its
/// own cluster. Writes the outputs when `cfg.out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, BenchError> {
    let (g, resolved) = cfg.resolve()?;
    let mut records = Vec::with_capacity(cfg.runs as usize);
    let mut labels: BTreeMap<String, LabelStats> = BTreeMap::new();
    let mut absorb = |cs: &ClusterState| {
        for (l, s) in cs.ledger().labels() {
            let e = labels.entry(l.clone()).or_default();
            e.rounds += s.rounds;
            e.units += s.units;
        }
        cs.ledger().rounds_charged()
    };
    let mut phases = None;
    let mut load = None;

    match resolved.algorithm {
        Algorithm::TreeSublinear => {
            let mut sampler = TreeSampler::new(&g, resolved.tree)?;
            let (mut max_phases, mut sum_phases, mut idealized_runs) = (0, 0, 0);
            for trial in 0..cfg.runs {
                let seed = cfg.seed.wrapping_add(trial);
                let mut cs = ClusterState::for_graph(&g, seed, resolved.cost);
                let run = sampler.sample(&mut cs);
                let rounds = absorb(&cs);
                max_phases = max_phases.max(run.phase_count());
                sum_phases += run.phase_count();
                idealized_runs += run.idealized() as u64;
                records.push(RunRecord {
                    trial,
                    seed,
                    outcome: tree_key(&run.edges),
                    flagged: run.flagged,
                    phases: run.phase_count(),
                    rounds,
                    idealized: run.idealized(),
                });
            }
            phases = Some(PhaseSummary {
                max_phases,
                mean_phases: sum_phases as f64 / cfg.runs as f64,
                idealized_runs,
            });
        }
        Algorithm::TreeViaDoubling => {
            let budget = resolved.cover_budget.expect("resolved");
            for trial in 0..cfg.runs {
                let seed = cfg.seed.wrapping_add(trial);
                let mut cs = ClusterState::for_graph(&g, seed, resolved.cost);
                let tree = tree_via_doubling(&mut cs, &g, budget, resolved.c)?;
                let rounds = absorb(&cs);
                records.push(RunRecord {
                    trial,
                    seed,
                    outcome: tree_key(&tree.edges),
                    flagged: false,
                    phases: 0,
                    rounds,
                    idealized: false,
                });
            }
        }
        Algorithm::AldousBroderRef => {
            for trial in 0..cfg.runs {
                let seed = cfg.seed.wrapping_add(trial);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let edges = aldous_broder_reference(&g, &mut rng);
                records.push(RunRecord {
                    trial,
                    seed,
                    outcome: tree_key(&edges),
                    flagged: false,
                    phases: 0,
                    rounds: 0,
                    idealized: false,
                });
            }
        }
        Algorithm::DoublingWalk => {
            let tau = resolved.tau.expect("resolved");
            let (mut max_tuples, mut over) = (0, 0);
            for trial in 0..cfg.runs {
                let seed = cfg.seed.wrapping_add(trial);
                let mut cs = ClusterState::for_graph(&g, seed, resolved.cost);
                let run = run_doubling(&mut cs, tau, resolved.c)?;
                let rounds = absorb(&cs);
                max_tuples = max_tuples.max(run.load_max());
                over += !run.within_load_bound() as u64;
                records.push(RunRecord {
                    trial,
                    seed,
                    outcome: (run.walks[0].last().unwrap() + 1).to_string(),
                    flagged: false,
                    phases: 0,
                    rounds,
                    idealized: false,
                });
            }
            load = Some(LoadSummary { max_tuples, runs_over_bound: over });
        }
    }

    let frequencies = tally(records.iter().map(|r| r.outcome.clone()));
    let (target, tv_unavailable) = match target_law(&g, &resolved.algorithm, resolved.tau, cfg.census_cap) {
        Ok(t) => (Some(t), None),
        Err(why) => (None, Some(why)),
    };
    let tv = target.as_ref().map(|t| tv_to_target(&frequencies, t));
    let chi = target.as_ref().map(|t| {
        let (statistic, dof) = chi_square(&frequencies, t);
        ChiSquare { statistic, dof, threshold: chi_square_threshold(dof) }
    });
    let total_rounds: u64 = records.iter().map(|r| r.rounds).sum();
    let report = Report {
        config: resolved,
        frequencies,
        tv,
        tv_unavailable,
        chi_square: chi,
        flag_rate: records.iter().filter(|r| r.flagged).count() as f64 / cfg.runs as f64,
        ledger: LedgerSummary {
            total_rounds,
            mean_rounds: total_rounds as f64 / cfg.runs as f64,
            max_rounds: records.iter().map(|r| r.rounds).max().unwrap_or(0),
            labels,
        },
        phases,
        load,
    };
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &report, &records)?;
    }
    Ok(Experiment { report, records })
}

/// The exact law each algorithm should reproduce, keyed like the outcomes.
fn target_law(g: &Graph, algo: &Algorithm, tau: Option<usize>, cap: usize) -> Result<BTreeMap<String, f64>, String> {
    if algo.samples_trees() {
        let census = enumerate_spanning_trees(g, cap).map_err(|e| format!("TV unavailable: {e}"))?;
        return Ok(census
            .trees()
            .iter()
            .map(|t| tree_key(t))
            .zip(census.target_distribution())
            .collect());
    }
    let steps = tau.expect("resolved").next_power_of_two();
    let row = power_row(g, 0, steps);
    Ok(row
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .map(|(v, p)| ((v + 1).to_string(), p))
        .collect())
}

/// Row `start` of `P^steps`, by repeated vector products.
pub fn power_row(g: &Graph, start: usize, steps: usize) -> Vec<f64> {
    let p = transition_matrix(g);
    let n = g.n();
    let mut row = vec![0.0; n];
    row[start] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (u, &x) in row.iter().enumerate() {
            if x > 0.0 {
                for (v, y) in next.iter_mut().enumerate() {
                    *y += x * p.get(u, v);
                }
            }
        }
        row = next;
    }
    row
}
