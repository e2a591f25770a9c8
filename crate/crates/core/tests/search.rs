use std::sync::atomic::{AtomicUsize, Ordering};

use anytime_core::augment::{builtin_pool, SubPolicy};
use anytime_core::search::{search_policies, EvalRequest, PolicyEvaluator, SearchConfig};
use anytime_core::Result;
use proptest::prelude::*;

struct Scripted {
    baseline: f64,
    scores: Vec<f64>,
    calls: AtomicUsize,
}

impl Scripted {
    fn new(baseline: f64, scores: Vec<f64>) -> Self {
        Self {
            baseline,
            scores,
            calls: AtomicUsize::new(0),
        }
    }
}

impl PolicyEvaluator for Scripted {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(if req.iteration == 0 {
            self.baseline
        } else {
            self.scores[req.iteration - 1]
        })
    }
}

fn script() -> impl Strategy<Value = (f64, Vec<f64>, usize, usize, u64)> {
    (1usize..40, 1usize..8, 1usize..6, any::<u64>()).prop_flat_map(|(t, n, c, seed)| {
        // coarse grid so ties are common
        let level = (0u8..10).prop_map(|v| f64::from(v) / 10.0);
        (
            level.clone(),
            prop::collection::vec(level, t),
            Just(n),
            Just(c),
            Just(seed),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selection_matches_oracle((baseline, scores, n, c, seed) in script()) {
        let t = scores.len();
        let eval = Scripted::new(baseline, scores.clone());
        let cfg = SearchConfig { c, t, n, seed, eval_repeats: 1 };
        let res = search_policies(&cfg, &eval, &builtin_pool()).unwrap();
        prop_assert_eq!(eval.calls.load(Ordering::SeqCst), t + 1);
        prop_assert!(res.candidates_kept <= t);

        let mut kept: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > baseline)
            .map(|(i, &s)| (s, i + 1))
            .collect();
        prop_assert_eq!(res.candidates_kept, kept.len());
        kept.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        kept.truncate(n);
        let top: Vec<usize> = kept.iter().map(|k| k.1).collect();
        prop_assert_eq!(&res.top_iterations, &top);

        let mut union: Vec<SubPolicy> = Vec::new();
        for it in top {
            for sp in res.trace[it - 1].policy.subpolicies() {
                if !union.contains(sp) {
                    union.push(*sp);
                }
            }
        }
        prop_assert_eq!(&res.selected, &union);
        for cand in &res.trace {
            prop_assert_eq!(cand.kept, cand.score > baseline);
            prop_assert_eq!(cand.policy.len(), c);
        }
    }

    #[test]
    fn raising_the_baseline_only_shrinks_the_kept_set((baseline, scores, n, c, seed) in script(), bump in 0.0f64..0.5) {
        let t = scores.len();
        let cfg = SearchConfig { c, t, n, seed, eval_repeats: 1 };
        let low = search_policies(&cfg, &Scripted::new(baseline, scores.clone()), &builtin_pool()).unwrap();
        let high = search_policies(&cfg, &Scripted::new(baseline + bump, scores), &builtin_pool()).unwrap();
        prop_assert!(high.candidates_kept <= low.candidates_kept);
        for (a, b) in low.trace.iter().zip(&high.trace) {
            prop_assert!(!b.kept || a.kept);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic((baseline, scores, n, c, seed) in script()) {
        let t = scores.len();
        let cfg = SearchConfig { c, t, n, seed, eval_repeats: 1 };
        let a = search_policies(&cfg, &Scripted::new(baseline, scores.clone()), &builtin_pool()).unwrap();
        let b = search_policies(&cfg, &Scripted::new(baseline, scores), &builtin_pool()).unwrap();
        prop_assert_eq!(&a.selected, &b.selected);
        prop_assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(&x.policy, &y.policy);
            prop_assert_eq!(x.score, y.score);
        }
    }
}

#[test]
fn whole_pool_as_one_candidate() {
    let pool = builtin_pool();
    let eval = Scripted::new(0.0, vec![1.0]);
    let cfg = SearchConfig {
        c: pool.len(),
        t: 1,
        ..Default::default()
    };
    let res = search_policies(&cfg, &eval, &pool).unwrap();
    let mut got = res.selected.clone();
    let mut all = pool.subpolicies().to_vec();
    let key = |s: &SubPolicy| serde_json::to_string(s).unwrap();
    got.sort_by_key(key);
    all.sort_by_key(key);
    assert_eq!(got, all);
}
