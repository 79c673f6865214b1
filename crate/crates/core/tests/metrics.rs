mod common;

use proptest::prelude::*;
use vanet_privacy::assignment::exhaustive;
use vanet_privacy::metrics::{
    assign_tracks, assign_tracks_for, normalized_traceability, pseudonym_histories, segment_lengths, traceability,
    SegmentMatrix,
};
use vanet_privacy::trace::TraceSet;

use common::{lifetime_set, scenario_five_six};

#[test]
fn five_traces_six_tracks_by_hand() {
    let (traces, tracks, events) = scenario_five_six();
    let m = segment_lengths(&tracks, &traces, 4);
    // rows a..e, columns T0..T5
    assert_eq!(
        m.to_dense(),
        vec![
            vec![20, 0, 0, 0, 0, 0],
            vec![0, 10, 8, 0, 0, 0],
            vec![0, 0, 0, 5, 0, 0],
            vec![0, 0, 0, 1, 10, 0],
            vec![0, 0, 0, 0, 0, 27],
        ]
    );
    let a = assign_tracks(&m);
    assert_eq!(a.vehicle_track, vec![Some(0), Some(1), Some(3), Some(4), Some(5)]);
    assert_eq!(a.tau_steps, vec![20, 10, 5, 10, 27]);
    let h = pseudonym_histories(&events);
    // a, d and e reach 90 %; d never changed
    assert_eq!(traceability(&a, &traces), 60.0);
    assert_eq!(normalized_traceability(&a, &traces, &h), 40.0);
}

fn greedy_total(l: &[Vec<i64>]) -> i64 {
    let cols = l.first().map_or(0, Vec::len);
    let mut used = vec![false; cols];
    let mut total = 0;
    for row in l {
        if let Some((j, &v)) = row.iter().enumerate().filter(|(j, _)| !used[*j]).max_by_key(|(_, &v)| v) {
            if v > 0 {
                used[j] = true;
                total += v;
            }
        }
    }
    total
}

fn matrix(max_dim: usize, max_val: i64) -> impl Strategy<Value = Vec<Vec<i64>>> {
    (1..=max_dim, 1..=max_dim)
        .prop_flat_map(move |(r, c)| prop::collection::vec(prop::collection::vec(0..=max_val, c), r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn assignment_is_optimal(l in matrix(6, 40)) {
        let m = SegmentMatrix::from_dense(&l, 1.0);
        let a = assign_tracks(&m);
        let opt = exhaustive(&l);
        prop_assert_eq!(a.total_steps, opt.total);
        prop_assert!(a.total_steps >= greedy_total(&l));
        let mut cols: Vec<usize> = a.vehicle_track.iter().flatten().copied().collect();
        let n = cols.len();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(cols.len(), n, "a track was assigned twice");
    }

    #[test]
    fn assigned_total_monotone_under_decrease(
        l in matrix(5, 12),
        pick in (0usize..25, 0usize..25),
        cut in 1i64..12,
    ) {
        let (v, t) = (pick.0 % l.len(), pick.1 % l[0].len());
        let mut l2 = l.clone();
        l2[v][t] = (l2[v][t] - cut).max(0);
        let before = assign_tracks(&SegmentMatrix::from_dense(&l, 1.0)).total_steps;
        let after = assign_tracks(&SegmentMatrix::from_dense(&l2, 1.0)).total_steps;
        prop_assert!(after <= before);
    }

    // Every track observed by one vehicle only: no competition between rows.
    #[test]
    fn traceability_monotone_under_decrease(
        owners in prop::collection::vec(0usize..5, 1..8),
        lengths in prop::collection::vec(1i64..12, 8),
        pick in 0usize..8,
        cut in 1i64..12,
    ) {
        let rows = owners.iter().max().unwrap() + 1;
        let mut l = vec![vec![0i64; owners.len()]; rows];
        for (t, &v) in owners.iter().enumerate() {
            l[v][t] = lengths[t];
        }
        let traces = lifetime_set(&vec![11; rows]);
        let score = |l: &[Vec<i64>]| traceability(&assign_tracks_for(&SegmentMatrix::from_dense(l, 1.0), &traces), &traces);
        let t = pick % owners.len();
        let mut l2 = l.clone();
        l2[owners[t]][t] = (l2[owners[t]][t] - cut).max(0);
        prop_assert!(score(&l2) <= score(&l));
    }

    #[test]
    fn invariant_to_relabeling(l in matrix(5, 12), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = l.len();
        let cols = l[0].len();
        let lifetimes: Vec<i64> = (0..rows).map(|v| 10 + v as i64).collect();
        let traces = lifetime_set(&lifetimes);
        let base = assign_tracks_for(&SegmentMatrix::from_dense(&l, 1.0), &traces);
        let pi = traceability(&base, &traces);

        let mut cperm: Vec<usize> = (0..cols).collect();
        cperm.shuffle(&mut rng);
        let relabeled: Vec<Vec<i64>> = l.iter().map(|r| cperm.iter().map(|&j| r[j]).collect()).collect();
        let a = assign_tracks_for(&SegmentMatrix::from_dense(&relabeled, 1.0), &traces);
        prop_assert_eq!(a.total_steps, base.total_steps);
        prop_assert_eq!(traceability(&a, &traces), pi);

        let mut rperm: Vec<usize> = (0..rows).collect();
        rperm.shuffle(&mut rng);
        let reordered: Vec<Vec<i64>> = rperm.iter().map(|&v| l[v].clone()).collect();
        let traces2 = TraceSet::new(rperm.iter().map(|&v| traces.traces()[v].clone()).collect(), 1.0).unwrap();
        let a = assign_tracks_for(&SegmentMatrix::from_dense(&reordered, 1.0), &traces2);
        prop_assert_eq!(traceability(&a, &traces2), pi);
    }
}

#[test]
fn segment_lengths_ignore_track_ids() {
    let (traces, tracks, _) = scenario_five_six();
    let base = segment_lengths(&tracks, &traces, 4).to_dense();
    let mut shuffled = tracks.clone();
    shuffled.reverse();
    for (i, t) in shuffled.iter_mut().enumerate() {
        t.track_id = 1000 - i as u64;
    }
    let m = segment_lengths(&shuffled, &traces, 4).to_dense();
    for (row, brow) in m.iter().zip(&base) {
        let mut r = row.clone();
        r.reverse();
        assert_eq!(&r, brow);
    }
}

// Lowering one length can move the maximum-total matching onto a vehicle
// that then crosses the 90 % line.
#[test]
fn traceability_can_rise_when_a_competing_length_drops() {
    let traces = lifetime_set(&[7, 10]);
    let score = |l: &[Vec<i64>]| traceability(&assign_tracks_for(&SegmentMatrix::from_dense(l, 1.0), &traces), &traces);
    assert_eq!(score(&[vec![0, 6], vec![6, 9]]), 0.0);
    assert_eq!(score(&[vec![0, 2], vec![6, 9]]), 50.0);
}

#[test]
fn ties_resolve_towards_tracked_vehicles() {
    let traces = lifetime_set(&[10, 11]);
    for l in [[vec![6, 9], vec![6, 9]], [vec![9, 6], vec![9, 6]]] {
        let a = assign_tracks_for(&SegmentMatrix::from_dense(&l, 1.0), &traces);
        assert_eq!(a.tau_steps, vec![9, 6]);
        assert_eq!(traceability(&a, &traces), 50.0);
    }
}
