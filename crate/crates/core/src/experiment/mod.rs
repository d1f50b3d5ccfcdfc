//! Training, evaluation and tuning drivers plus the on-disk run layout.

mod metrics;
mod run;
mod tune;

pub use metrics::{header as metrics_header, parse_metrics, read_metrics, MetricsRow, MetricsTable, Phase};
pub use run::{
    default_results_root, eval_seed, evaluate, evaluate_agent, run_episode, timestamp, train, train_seed,
    EpisodeStats, EvalSummary, RunRecord, TrainOptions, RESULTS_DIR_ENV,
};
pub use tune::{leaderboard_csv, trial_config, tune, ParameterKind, TrialResult, TuneRecord, TuningParameter, TuningSpec};

/// Maps `f` over `items` on up to `workers` threads, preserving order.
pub(crate) fn par_map<I, O, F>(items: &[I], workers: usize, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let workers = workers.min(items.len());
    let mut slots: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, item)| (i, f(item)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, out) in h.join().expect("worker panicked") {
                slots[i] = Some(out);
            }
        }
    });
    slots.into_iter().map(|o| o.expect("every item mapped")).collect()
}

#[cfg(test)]
mod tests;
