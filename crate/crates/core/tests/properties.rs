use faml::losses::{class_balance_weights, lambda_schedule};
use faml::metrics::{ece, DEFAULT_ECE_BINS};
use faml::opinion::opinion_from_evidence;
use faml::prior::{compute_prior, TrajectoryRecord};
use faml::{aggregate_weighted, fairness_degree, project, EvidenceVector, PriorVector, ProbabilityVector};
use proptest::prelude::*;

fn evidence_and_prior(max_k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max_k).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0..100.0f64, k),
            prop::collection::vec(0.01..20.0f64, k),
        )
    })
}

proptest! {
    #[test]
    fn opinion_masses_sum_to_one((e, b) in evidence_and_prior(12)) {
        let prior = PriorVector::new(b).unwrap();
        let o = opinion_from_evidence(&EvidenceVector::new(e).unwrap(), &prior, &prior.base_rates()).unwrap();
        let mass: f64 = o.belief.iter().sum::<f64>() + o.uncertainty;
        prop_assert!((mass - 1.0).abs() < 1e-12);
        let p: f64 = project(&o).as_slice().iter().sum();
        prop_assert!((p - 1.0).abs() < 1e-12);
        prop_assert!(o.uncertainty > 0.0 && o.uncertainty <= 1.0);
    }

    #[test]
    fn vacuous_opinion_projects_to_base_rates((_, b) in evidence_and_prior(8)) {
        let k = b.len();
        let prior = PriorVector::new(b).unwrap();
        let rates = prior.base_rates();
        let o = opinion_from_evidence(&EvidenceVector::zeros(k), &prior, &rates).unwrap();
        prop_assert_eq!(o.uncertainty, 1.0);
        for (p, a) in project(&o).as_slice().iter().zip(rates.as_slice()) {
            prop_assert!((p - a).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_is_convex(
        views in (2..6usize).prop_flat_map(|k| prop::collection::vec(
            (prop::collection::vec(0.0..50.0f64, k), 0.0..=1.0f64), 1..5)),
    ) {
        let input: Vec<(EvidenceVector, f64)> =
            views.iter().map(|(e, u)| (EvidenceVector::new(e.clone()).unwrap(), *u)).collect();
        let agg = aggregate_weighted(&input).unwrap();
        for (c, x) in agg.as_slice().iter().enumerate() {
            let lo = views.iter().map(|(e, _)| e[c]).fold(f64::INFINITY, f64::min);
            let hi = views.iter().map(|(e, _)| e[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*x >= lo - 1e-12 && *x <= hi + 1e-12);
        }
    }

    #[test]
    fn fairness_degree_is_permutation_invariant_and_quadratic(
        rows in (2..6usize).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0.0..20.0f64, k), 1..10)),
        scale in 0.1..10.0f64,
        rot in 0..10usize,
    ) {
        let set: Vec<EvidenceVector> = rows.iter().map(|r| EvidenceVector::new(r.clone()).unwrap()).collect();
        let f = fairness_degree(&set).unwrap();
        prop_assert!(f >= 0.0);
        let mut shuffled = set.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        prop_assert!((fairness_degree(&shuffled).unwrap() - f).abs() <= 1e-12 * f.max(1.0));
        let scaled: Vec<EvidenceVector> = rows
            .iter()
            .map(|r| EvidenceVector::new(r.iter().map(|x| x * scale).collect()).unwrap())
            .collect();
        let fs = fairness_degree(&scaled).unwrap();
        prop_assert!((fs - scale * scale * f).abs() <= 1e-9 * (scale * scale * f).max(1.0));
    }

    #[test]
    fn ece_is_bounded_and_order_invariant(
        samples in prop::collection::vec((0.0..=1.0f64, any::<bool>()), 1..60),
        rot in 0..60usize,
    ) {
        let conf: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ok: Vec<bool> = samples.iter().map(|s| s.1).collect();
        let e = ece(&conf, &ok, DEFAULT_ECE_BINS).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let mut rotated = samples.clone();
        let n = rotated.len();
        rotated.rotate_left(rot % n);
        let conf: Vec<f64> = rotated.iter().map(|s| s.0).collect();
        let ok: Vec<bool> = rotated.iter().map(|s| s.1).collect();
        prop_assert!((ece(&conf, &ok, DEFAULT_ECE_BINS).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn prior_is_bounded_below_by_gamma_and_shrinks_with_recall(
        counts in prop::collection::vec(1..50usize, 2..6),
        hits in prop::collection::vec(0.0..=1.0f64, 6),
        gamma in 0.01..10.0f64,
    ) {
        let k = counts.len();
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, n)| vec![c; *n]).collect();
        // The first round(hits_c * N_c) samples of class c are predicted correctly.
        let correct: Vec<usize> = counts.iter().zip(&hits).map(|(n, h)| (h * *n as f64).round() as usize).collect();
        let predicted = |extra: usize| -> Vec<usize> {
            let mut seen = vec![0usize; k];
            labels
                .iter()
                .map(|&y| {
                    seen[y] += 1;
                    let budget = correct[y] + if y == 0 { extra } else { 0 };
                    if seen[y] <= budget { y } else { (y + 1) % k }
                })
                .collect()
        };
        let rec = TrajectoryRecord { epoch: 0, predicted: predicted(0) };
        let p = compute_prior(&rec, &labels, &counts, gamma).unwrap();
        for b in p.as_slice() {
            prop_assert!(*b >= gamma * (1.0 - 1e-15));
            prop_assert!(*b <= gamma * labels.len() as f64);
        }
        if correct[0] >= 1 && correct[0] < counts[0] {
            let more = TrajectoryRecord { epoch: 0, predicted: predicted(1) };
            let q = compute_prior(&more, &labels, &counts, gamma).unwrap();
            prop_assert!(q.as_slice()[0] < p.as_slice()[0]);
        }
    }

    #[test]
    fn lambda_ramp_is_monotone(total in 1..500usize) {
        let mut last = lambda_schedule(0, total);
        prop_assert_eq!(last, 0.0);
        for t in 1..=total {
            let l = lambda_schedule(t, total);
            prop_assert!(l >= last);
            last = l;
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn class_weights_have_unit_mean(counts in prop::collection::vec(1..10_000usize, 1..20)) {
        let w = class_balance_weights(&counts).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        for (i, j) in (0..counts.len()).zip(1..counts.len()) {
            prop_assert!((w[i] * counts[i] as f64 - w[j] * counts[j] as f64).abs() < 1e-9 * w[i] * counts[i] as f64);
        }
    }

    #[test]
    fn probability_vectors_reject_bad_input(p in prop::collection::vec(0.0..1.0f64, 2..6)) {
        let total: f64 = p.iter().sum();
        let normalized: Vec<f64> = p.iter().map(|x| x / total).collect();
        if total > 0.0 {
            prop_assert!(ProbabilityVector::new(normalized).is_ok());
        }
        let mut bad = p.clone();
        bad[0] = -0.5;
        prop_assert!(ProbabilityVector::new(bad).is_err());
    }
}
