//! Light density-matching policy search.
//!
//! A trained model scores the un-augmented validation set once (the
//! baseline). Each of `t` iterations draws `c` distinct sub-policies from the
//! pool, composes them into one candidate policy and scores the model on the
//! candidate-augmented validation set. Candidates that strictly beat the
//! baseline are kept; the top `n` by score (earlier iteration wins ties) are
//! united into the final sub-policy collection.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_policy, Policy, PolicyPool, SubPolicy};
use crate::data::{adapt, normalize, Image, InputSpec, LabelMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::nauc_macro;
use crate::rng;
use crate::trainer::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Sub-policies per candidate.
    pub c: usize,
    /// Iterations.
    pub t: usize,
    /// Candidates kept in the final selection.
    pub n: usize,
    pub seed: u64,
    /// Stochastic draws averaged per evaluation.
    pub eval_repeats: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            c: 3,
            t: 100,
            n: 5,
            seed: 0,
            eval_repeats: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.t == 0 || self.n == 0 || self.eval_repeats == 0 {
            return Err(Error::Config(
                "search needs c, t, n and eval_repeats of at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluator call. Iteration 0 is the un-augmented baseline.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub iteration: usize,
    pub policy: Option<&'a Policy>,
    pub seed: u64,
}

/// The metric R(model | policy(valid)).
pub trait PolicyEvaluator: Sync {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    /// 1-based iteration index.
    pub iteration: usize,
    pub policy: Policy,
    pub score: f64,
    pub kept: bool,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub selected: Vec<SubPolicy>,
    pub baseline_score: f64,
    pub baseline_seconds: f64,
    pub candidates_kept: usize,
    /// Iterations of the top candidates, best first.
    pub top_iterations: Vec<usize>,
    pub trace: Vec<ScoredCandidate>,
}

impl SearchResult {
    /// Uniform policy over the selection, `None` when nothing was kept.
    pub fn policy(&self) -> Option<Policy> {
        Policy::new(self.selected.clone()).ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("search result serializes")
    }
}

fn timed(f: impl FnOnce() -> Result<f64>) -> Result<(f64, f64)> {
    let start = Instant::now();
    let score = f()?;
    if !score.is_finite() {
        return Err(Error::Scoring(format!("evaluator returned {score}")));
    }
    Ok((score, start.elapsed().as_secs_f64()))
}

pub fn search_policies(cfg: &SearchConfig, evaluator: &dyn PolicyEvaluator, pool: &PolicyPool) -> Result<SearchResult> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Config("policy pool is empty".into()));
    }
    if cfg.c > pool.len() {
        return Err(Error::Config(format!(
            "c = {} exceeds the pool size {}",
            cfg.c,
            pool.len()
        )));
    }
    let mut sampler = rng::stream(cfg.seed, &[rng::tag::SEARCH]);
    let candidates: Vec<Policy> = (0..cfg.t)
        .map(|_| {
            let picked = sample(&mut sampler, pool.len(), cfg.c)
                .into_iter()
                .map(|i| pool.subpolicies()[i])
                .collect();
            Policy::new(picked)
        })
        .collect::<Result<_>>()?;

    let seed_for = |iteration: usize| rng::derive_seed(cfg.seed, &[rng::tag::SEARCH, iteration as u64]);
    let (baseline_score, baseline_seconds) = timed(|| {
        evaluator.evaluate(&EvalRequest {
            iteration: 0,
            policy: None,
            seed: seed_for(0),
        })
    })?;

    let scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, policy)| {
            timed(|| {
                evaluator.evaluate(&EvalRequest {
                    iteration: i + 1,
                    policy: Some(policy),
                    seed: seed_for(i + 1),
                })
            })
        })
        .collect::<Result<_>>()?;

    let trace: Vec<ScoredCandidate> = candidates
        .into_iter()
        .zip(scored)
        .enumerate()
        .map(|(i, (policy, (score, eval_seconds)))| ScoredCandidate {
            iteration: i + 1,
            policy,
            score,
            kept: score > baseline_score,
            eval_seconds,
        })
        .collect();

    let mut kept: Vec<&ScoredCandidate> = trace.iter().filter(|c| c.kept).collect();
    let candidates_kept = kept.len();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.iteration.cmp(&b.iteration)));
    kept.truncate(cfg.n);

    let mut selected: Vec<SubPolicy> = Vec::new();
    for cand in &kept {
        for sp in cand.policy.subpolicies() {
            if !selected.contains(sp) {
                selected.push(*sp);
            }
        }
    }
    let top_iterations = kept.iter().map(|c| c.iteration).collect();
    Ok(SearchResult {
        selected,
        baseline_score,
        baseline_seconds,
        candidates_kept,
        top_iterations,
        trace,
    })
}

/// Scores a trained model on policy-augmented validation images.
pub struct ModelEvaluator<'a> {
    model: &'a Model,
    adapted: Vec<Arc<Image>>,
    labels: &'a LabelMatrix,
    spec: InputSpec,
    tau: f64,
    repeats: usize,
}

impl<'a> ModelEvaluator<'a> {
    /// `adapted` are the validation images after resize and channel adjustment.
    pub fn new(
        model: &'a Model,
        adapted: Vec<Arc<Image>>,
        labels: &'a LabelMatrix,
        spec: InputSpec,
        tau: f64,
        repeats: usize,
    ) -> Self {
        Self {
            model,
            adapted,
            labels,
            spec,
            tau,
            repeats: repeats.max(1),
        }
    }

    fn score(&self, images: &[Image]) -> Result<f64> {
        nauc_macro(&self.model.predict(images, self.tau)?, self.labels)
    }
}

impl PolicyEvaluator for ModelEvaluator<'_> {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64> {
        let Some(policy) = request.policy else {
            let plain: Vec<Image> = self.adapted.iter().map(|img| normalize(img, &self.spec)).collect();
            return self.score(&plain);
        };
        let mut total = 0.0;
        for r in 0..self.repeats {
            // the originals stay untouched; every image gets its own stream
            let augmented: Vec<Image> = self
                .adapted
                .par_iter()
                .enumerate()
                .map(|(i, img)| {
                    let mut rng = rng::stream(request.seed, &[r as u64, i as u64]);
                    normalize(&apply_policy(img, policy, &mut rng), &self.spec)
                })
                .collect();
            total += self.score(&augmented)?;
        }
        Ok(total / self.repeats as f64)
    }
}

/// Macro NAUC of `model` on `valid` augmented by `policy` (or plain when `None`).
pub fn evaluate_candidate(
    model: &Model,
    valid: &LabeledDataset,
    spec: &InputSpec,
    policy: Option<&Policy>,
    seed: u64,
    tau: f64,
) -> Result<f64> {
    let adapted = valid
        .images()
        .iter()
        .map(|img| adapt(img, spec).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    ModelEvaluator::new(model, adapted, valid.labels(), *spec, tau, 1).evaluate(&EvalRequest {
        iteration: 1,
        policy,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{builtin_pool, OpKind, TransformOp};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        baseline: f64,
        scores: Vec<f64>,
        calls: AtomicUsize,
    }

    impl PolicyEvaluator for Scripted {
        fn evaluate(&self, req: &EvalRequest<'_>) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(match req.iteration {
                0 => self.baseline,
                i => self.scores[i - 1],
            })
        }
    }

    fn scripted(baseline: f64, scores: &[f64]) -> Scripted {
        Scripted {
            baseline,
            scores: scores.to_vec(),
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn hand_traced_selection() {
        let eval = scripted(0.2, &[0.1, 0.5, 0.3, 0.5, 0.25]);
        let cfg = SearchConfig {
            t: 5,
            n: 2,
            ..Default::default()
        };
        let res = search_policies(&cfg, &eval, &builtin_pool()).unwrap();
        assert_eq!(res.candidates_kept, 4);
        assert_eq!(res.top_iterations, vec![2, 4]);
        assert_eq!(eval.calls.load(Ordering::SeqCst), 6);
        let mut expected: Vec<SubPolicy> = Vec::new();
        for it in [2, 4] {
            for sp in res.trace[it - 1].policy.subpolicies() {
                if !expected.contains(sp) {
                    expected.push(*sp);
                }
            }
        }
        assert_eq!(res.selected, expected);
    }

    #[test]
    fn nothing_beats_baseline() {
        let eval = scripted(0.5, &[0.5; 10]);
        let cfg = SearchConfig {
            t: 10,
            ..Default::default()
        };
        let res = search_policies(&cfg, &eval, &builtin_pool()).unwrap();
        assert_eq!(res.candidates_kept, 0);
        assert!(res.selected.is_empty());
        assert!(res.policy().is_none());
    }

    #[test]
    fn single_improving_iteration() {
        let eval = scripted(0.1, &[0.9]);
        let cfg = SearchConfig {
            t: 1,
            ..Default::default()
        };
        let res = search_policies(&cfg, &eval, &builtin_pool()).unwrap();
        assert_eq!(res.selected, res.trace[0].policy.subpolicies().to_vec());
    }

    #[test]
    fn config_errors() {
        let eval = scripted(0.1, &[]);
        let empty = PolicyPool::new(1, vec![]).unwrap();
        assert!(matches!(
            search_policies(&SearchConfig::default(), &eval, &empty),
            Err(Error::Config(_))
        ));
        let cfg = SearchConfig {
            c: 26,
            ..Default::default()
        };
        assert!(search_policies(&cfg, &eval, &builtin_pool()).is_err());
    }

    #[test]
    fn zero_probability_pool_keeps_nothing_with_real_evaluator() {
        use crate::data::{infer_meta, target_input_shape};
        use crate::trainer::Architecture;
        let off = TransformOp::new(OpKind::Rotate, 0.0, 9).unwrap();
        let pool = PolicyPool::new(1, vec![SubPolicy::new(off, off); 4]).unwrap();
        let images: Vec<Image> = (0..8)
            .map(|i| Image::from_fn(6, 6, 3, |r, c, ch| ((r + c * i + ch) % 5) as f32 / 4.0).unwrap())
            .collect();
        let labels = LabelMatrix::one_hot(&[0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let spec = target_input_shape(&infer_meta(&images, 2).unwrap());
        let model = Model::new(Architecture::for_input(&spec, 2, &[4, 4]).unwrap(), 0);
        let adapted = images.iter().map(|i| Arc::new(adapt(i, &spec).unwrap())).collect();
        let eval = ModelEvaluator::new(&model, adapted, &labels, spec, 8.0, 1);
        let cfg = SearchConfig {
            c: 2,
            t: 5,
            ..Default::default()
        };
        let res = search_policies(&cfg, &eval, &pool).unwrap();
        assert!(res.trace.iter().all(|c| c.score == res.baseline_score));
        assert!(res.selected.is_empty());
    }
}
