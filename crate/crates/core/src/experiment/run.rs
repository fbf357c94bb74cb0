//! The active learning round loop.
//!
//! One run: adversarially train on the initial labeled pool, then for each
//! round find the worst group on the validation split, score and acquire
//! new labels, and retrain. Observers receive each report as soon as its
//! round completes so partial results survive mid-run failures.

use super::config::{resolve_budget, ExperimentConfig};
use super::timing::time_section;
use super::ExperimentError;
use crate::adversarial::{
    train_adversarial, AdvInit, AttackConfig, AttackInit, AttackObjective,
};
use crate::data::{DatasetBundle, PoolState, Split};
use crate::fairness::{aggregate, evaluate_groups, worst_group, FairnessReport, GroupMetrics};
use crate::model::{train_standard, ArchSpec, ClassifierSnapshot};
use crate::seeds;
use crate::selection::{select, ScoreRecord, SelectionRequest, Strategy};
use serde::{Deserialize, Serialize};

/// Wall-clock costs of one round. `selection_seconds` covers everything
/// needed to produce the acquisition, so for JIN it includes training the
/// auxiliary standard model; that share is reported separately as
/// `std_train_seconds` (zero for strategies that skip it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub selection_seconds: f64,
    pub std_train_seconds: f64,
    pub adv_train_seconds: f64,
}

/// Per-purpose seeds of one round, derived from the master seed and the
/// round index. Recorded so any phase can be replayed in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSeeds {
    pub selection: u64,
    pub std_train: u64,
    pub adv_train: u64,
}

/// State after initialization, before any acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub labeled: usize,
    pub validation: FairnessReport,
    pub test: FairnessReport,
    pub adv_train_seconds: f64,
    pub adv_train_seed: u64,
}

/// Everything observable about one completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub strategy: Strategy,
    /// Worst group on the validation split before retraining.
    pub worst_group: u32,
    /// Acquired sample ids, ascending.
    pub selected: Vec<usize>,
    /// True group of each selected sample, aligned with `selected`.
    pub selected_groups: Vec<u32>,
    /// Candidate scores when the strategy produces them (JIN only).
    pub scores: Option<Vec<ScoreRecord>>,
    pub before_validation: FairnessReport,
    pub before_test: FairnessReport,
    pub after_validation: FairnessReport,
    pub after_test: FairnessReport,
    pub timing: RoundTiming,
    pub seeds: RoundSeeds,
    /// Labeled pool size after this round's acquisition.
    pub labeled_after: usize,
}

/// Context handed to observers after initialization.
pub struct InitContext<'a> {
    pub config: &'a ExperimentConfig,
    pub bundle: &'a DatasetBundle,
    pub model: &'a ClassifierSnapshot,
    pub report: &'a InitReport,
}

/// Context handed to observers after each round.
pub struct RoundContext<'a> {
    pub config: &'a ExperimentConfig,
    pub bundle: &'a DatasetBundle,
    pub model: &'a ClassifierSnapshot,
    pub report: &'a RoundReport,
}

/// Receives reports as they complete. Implementations persist them; an
/// error aborts the run.
pub trait RunObserver {
    fn on_init(&mut self, _ctx: &InitContext) -> Result<(), ExperimentError> {
        Ok(())
    }
    fn on_round(&mut self, _ctx: &RoundContext) -> Result<(), ExperimentError> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Outcome of a full run.
#[derive(Debug)]
pub struct RunResult {
    pub init: InitReport,
    pub rounds: Vec<RoundReport>,
    /// Final robust model.
    pub model: ClassifierSnapshot,
    pub pool: PoolState,
    /// Resolved per-round budget.
    pub budget: usize,
    /// Number of worst-group evaluations performed; equals the round count.
    pub worst_group_evals: u32,
}

/// Run the full loop. The caller provides the already-loaded bundle so
/// ingestion errors surface before any training starts.
pub fn run_fral(
    cfg: &ExperimentConfig,
    bundle: &DatasetBundle,
    observer: &mut dyn RunObserver,
) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let arch = ArchSpec::parse(&cfg.architecture)?;
    let budget = resolve_budget(cfg.budget, bundle.split_ids(Split::Train).len())?;
    let mut pool = PoolState::init(
        bundle,
        cfg.labeled_fraction,
        seeds::derive(cfg.seed, seeds::tag::INIT_POOL, &[]),
    )?;

    // Scoring attack for the robust-inconsistency term: same ball and steps
    // as the training inner attack, forced to the label-free KL objective
    // with a random start (a KL attack started at the clean input has an
    // exactly zero gradient and would never move).
    let scoring_attack = AttackConfig {
        objective: AttackObjective::KlToBenign,
        init: AttackInit::UniformInBall,
        ..cfg.adv_train.attack.clone()
    };

    let eval = |model: &ClassifierSnapshot,
                split: Split|
     -> Result<(GroupMetrics, FairnessReport), ExperimentError> {
        let metrics = evaluate_groups(
            model,
            bundle,
            split,
            cfg.metric,
            Some((&cfg.eval_attack, cfg.seed)),
        )?;
        let report = aggregate(&metrics)?;
        Ok((metrics, report))
    };

    let init_adv_seed = seeds::derive(cfg.seed, seeds::tag::ADV_TRAIN, &[0]);
    let (initial, init_secs) = time_section(|| {
        train_adversarial(
            AdvInit::Scratch(&arch),
            &pool.labeled_view(bundle),
            &cfg.adv_train.with_seed(init_adv_seed),
            0,
        )
    });
    let mut model = initial?;

    let (_, init_val) = eval(&model, Split::Validation)?;
    let (_, init_test) = eval(&model, Split::Test)?;
    let init = InitReport {
        labeled: pool.num_labeled(),
        validation: init_val,
        test: init_test,
        adv_train_seconds: init_secs,
        adv_train_seed: init_adv_seed,
    };
    observer.on_init(&InitContext {
        config: cfg,
        bundle,
        model: &model,
        report: &init,
    })?;

    let mut rounds: Vec<RoundReport> = Vec::with_capacity(cfg.rounds as usize);
    let mut worst_group_evals = 0u32;
    for k in 1..=cfg.rounds {
        let round_seeds = RoundSeeds {
            selection: seeds::derive(cfg.seed, seeds::tag::SELECTION, &[u64::from(k)]),
            std_train: seeds::derive(cfg.seed, seeds::tag::STD_TRAIN, &[u64::from(k)]),
            adv_train: seeds::derive(cfg.seed, seeds::tag::ADV_TRAIN, &[u64::from(k)]),
        };

        let mut body = || -> Result<RoundReport, ExperimentError> {
            // The worst group is recomputed from the current model every
            // round; nothing is cached across rounds.
            let (val_metrics, before_validation) = eval(&model, Split::Validation)?;
            let z_star = worst_group(&val_metrics, cfg.worst_group_mode)?;
            let (_, before_test) = eval(&model, Split::Test)?;

            let candidates = if cfg.strategy.group_scoped() {
                pool.group_subset(bundle, z_star)?
            } else {
                pool.unlabeled_ids()
            };

            let (outcome, std_train_seconds, selection_seconds) = {
                let labeled_view = pool.labeled_view(bundle);
                let unlabeled_view = pool.unlabeled_view(bundle);
                let selection_start = std::time::Instant::now();
                let (standard, std_secs) = if cfg.strategy.needs_standard_model() {
                    let (trained, secs) = time_section(|| {
                        train_standard(
                            &arch,
                            &labeled_view,
                            &cfg.train.with_seed(round_seeds.std_train),
                            k,
                        )
                    });
                    (Some(trained?), secs)
                } else {
                    (None, 0.0)
                };
                let req = SelectionRequest {
                    strategy: cfg.strategy,
                    budget,
                    round: k,
                    seed: cfg.seed,
                    candidates: &candidates,
                    pool: &unlabeled_view,
                    labeled: &labeled_view,
                    robust: &model,
                    standard: standard.as_ref(),
                    attack: &scoring_attack,
                };
                let outcome = select(&req)?;
                (outcome, std_secs, selection_start.elapsed().as_secs_f64())
            };

            pool.acquire(&outcome.selected, k)?;
            pool.check_partition(bundle)?;
            let selected_groups: Vec<u32> = outcome
                .selected
                .iter()
                .map(|&id| bundle.group_of(id))
                .collect();

            let (retrained, adv_train_seconds) = {
                let init_state = if cfg.adv_train.warm_start {
                    AdvInit::Warm(&model)
                } else {
                    AdvInit::Scratch(&arch)
                };
                let labeled_view = pool.labeled_view(bundle);
                time_section(|| {
                    train_adversarial(
                        init_state,
                        &labeled_view,
                        &cfg.adv_train.with_seed(round_seeds.adv_train),
                        k,
                    )
                })
            };
            let retrained = retrained?;

            let (_, after_validation) = eval(&retrained, Split::Validation)?;
            let (_, after_test) = eval(&retrained, Split::Test)?;

            let report = RoundReport {
                round: k,
                strategy: cfg.strategy,
                worst_group: z_star,
                selected: outcome.selected,
                selected_groups,
                scores: outcome.scores,
                before_validation,
                before_test,
                after_validation,
                after_test,
                timing: RoundTiming {
                    selection_seconds,
                    std_train_seconds,
                    adv_train_seconds,
                },
                seeds: round_seeds,
                labeled_after: pool.num_labeled(),
            };
            model = retrained;
            Ok(report)
        };

        let report = body().map_err(|e| e.at_round(k))?;
        worst_group_evals += 1;
        observer
            .on_round(&RoundContext {
                config: cfg,
                bundle,
                model: &model,
                report: &report,
            })
            .map_err(|e| e.at_round(k))?;
        rounds.push(report);
    }

    debug_assert_eq!(worst_group_evals, cfg.rounds);
    Ok(RunResult {
        init,
        rounds,
        model,
        pool,
        budget,
        worst_group_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::experiment::config::{BudgetSpec, DatasetConfig};
    use crate::fairness::{MetricKind, WorstGroupMode};
    use crate::model::TrainConfig;
    use crate::adversarial::RobustTrainConfig;

    fn tiny_config(strategy: Strategy) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic(SyntheticSpec {
                name: "two-group-gaussians".to_string(),
                seed: 9,
                n: 140,
                params: Default::default(),
                splits: Default::default(),
            }),
            architecture: "linear".to_string(),
            strategy,
            rounds: 2,
            budget: BudgetSpec::Absolute(3),
            labeled_fraction: 0.2,
            seed: 11,
            worst_group_mode: WorstGroupMode::Robust,
            metric: MetricKind::Accuracy,
            train: TrainConfig {
                epochs: 3,
                ..Default::default()
            },
            adv_train: RobustTrainConfig {
                epochs: 3,
                trades_beta: 1.0,
                ..Default::default()
            },
            eval_attack: AttackConfig {
                steps: 2,
                ..Default::default()
            },
        }
    }

    fn run(cfg: &ExperimentConfig) -> RunResult {
        let bundle = cfg.load_dataset(std::path::Path::new(".")).unwrap();
        run_fral(cfg, &bundle, &mut NoopObserver).unwrap()
    }

    /// Wall-clock seconds are never reproducible; compare the rest.
    fn init_without_timing(init: &InitReport) -> InitReport {
        InitReport {
            adv_train_seconds: 0.0,
            ..init.clone()
        }
    }

    #[test]
    fn single_round_single_budget_grows_the_pool_by_one() {
        let mut cfg = tiny_config(Strategy::Rand);
        cfg.rounds = 1;
        cfg.budget = BudgetSpec::Absolute(1);
        let result = run(&cfg);
        assert_eq!(result.rounds.len(), 1);
        assert_eq!(result.worst_group_evals, 1);
        let report = &result.rounds[0];
        assert_eq!(report.round, 1);
        assert_eq!(report.selected.len(), 1);
        assert_eq!(report.labeled_after, result.init.labeled + 1);
    }

    #[test]
    fn pool_growth_matches_the_acquisition_sizes() {
        let cfg = tiny_config(Strategy::Ent);
        let result = run(&cfg);
        assert_eq!(result.rounds.len(), 2);
        let mut expected = result.init.labeled;
        for report in &result.rounds {
            expected += report.selected.len();
            assert_eq!(report.labeled_after, expected);
            assert!(report.selected.len() <= result.budget);
            assert!(report.timing.selection_seconds >= 0.0);
            assert!(report.timing.adv_train_seconds >= 0.0);
        }
        assert_eq!(result.pool.num_labeled(), expected);
    }

    #[test]
    fn identical_runs_are_identical() {
        let cfg = tiny_config(Strategy::Jin);
        let a = run(&cfg);
        let b = run(&cfg);
        let sel_a: Vec<_> = a.rounds.iter().map(|r| r.selected.clone()).collect();
        let sel_b: Vec<_> = b.rounds.iter().map(|r| r.selected.clone()).collect();
        assert_eq!(sel_a, sel_b);
        assert_eq!(init_without_timing(&a.init), init_without_timing(&b.init));
        assert_eq!(
            a.rounds.last().unwrap().after_test,
            b.rounds.last().unwrap().after_test
        );
    }

    #[test]
    fn initialization_is_strategy_independent() {
        let mut jin = tiny_config(Strategy::Jin);
        jin.rounds = 1;
        let mut rand = tiny_config(Strategy::Rand);
        rand.rounds = 1;
        let a = run(&jin);
        let b = run(&rand);
        assert_eq!(init_without_timing(&a.init), init_without_timing(&b.init));
    }

    #[test]
    fn group_scoped_strategies_stay_inside_the_worst_group() {
        let cfg = tiny_config(Strategy::GRand);
        let bundle = cfg.load_dataset(std::path::Path::new(".")).unwrap();
        let result = run_fral(&cfg, &bundle, &mut NoopObserver).unwrap();
        for report in &result.rounds {
            for (&id, &group) in report.selected.iter().zip(&report.selected_groups) {
                assert_eq!(bundle.group_of(id), group);
                assert_eq!(group, report.worst_group);
            }
        }
    }

    #[test]
    fn jin_reports_scores_and_baselines_do_not() {
        let jin = run(&tiny_config(Strategy::Jin));
        assert!(jin.rounds[0].scores.is_some());
        let count = jin.rounds[0].scores.as_ref().unwrap().len();
        assert!(count >= jin.rounds[0].selected.len());
        assert!(jin.rounds[0].timing.std_train_seconds > 0.0);

        let rand = run(&tiny_config(Strategy::Rand));
        assert!(rand.rounds[0].scores.is_none());
        assert_eq!(rand.rounds[0].timing.std_train_seconds, 0.0);
    }

    struct Recorder {
        inits: usize,
        rounds: Vec<u32>,
        fail_at: Option<u32>,
    }

    impl RunObserver for Recorder {
        fn on_init(&mut self, _ctx: &InitContext) -> Result<(), ExperimentError> {
            self.inits += 1;
            Ok(())
        }
        fn on_round(&mut self, ctx: &RoundContext) -> Result<(), ExperimentError> {
            if self.fail_at == Some(ctx.report.round) {
                return Err(ExperimentError::Persist("disk full".to_string()));
            }
            self.rounds.push(ctx.report.round);
            Ok(())
        }
    }

    #[test]
    fn observers_see_rounds_as_they_complete() {
        let cfg = tiny_config(Strategy::Rand);
        let bundle = cfg.load_dataset(std::path::Path::new(".")).unwrap();
        let mut rec = Recorder {
            inits: 0,
            rounds: vec![],
            fail_at: None,
        };
        run_fral(&cfg, &bundle, &mut rec).unwrap();
        assert_eq!(rec.inits, 1);
        assert_eq!(rec.rounds, vec![1, 2]);
    }

    #[test]
    fn observer_failure_aborts_with_the_round_index() {
        let cfg = tiny_config(Strategy::Rand);
        let bundle = cfg.load_dataset(std::path::Path::new(".")).unwrap();
        let mut rec = Recorder {
            inits: 0,
            rounds: vec![],
            fail_at: Some(2),
        };
        let err = run_fral(&cfg, &bundle, &mut rec).unwrap_err();
        match err {
            ExperimentError::Round { round, .. } => assert_eq!(round, 2),
            other => panic!("unexpected error {other}"),
        }
        // Round 1 was delivered before the failure: partial results exist.
        assert_eq!(rec.rounds, vec![1]);
    }

    #[test]
    fn from_scratch_retraining_also_runs() {
        let mut cfg = tiny_config(Strategy::Cset);
        cfg.adv_train.warm_start = false;
        cfg.rounds = 1;
        let result = run(&cfg);
        assert_eq!(result.rounds.len(), 1);
    }

    #[test]
    fn budget_clamps_to_the_candidate_pool() {
        let mut cfg = tiny_config(Strategy::GRand);
        cfg.budget = BudgetSpec::Absolute(10_000);
        cfg.rounds = 1;
        let result = run(&cfg);
        // The worst group has fewer unlabeled samples than the budget; the
        // acquisition takes all of them and nothing from other groups.
        let report = &result.rounds[0];
        assert!(!report.selected.is_empty());
        assert!(report.selected.len() < 10_000);
        assert!(report
            .selected_groups
            .iter()
            .all(|&g| g == report.worst_group));
    }
}
