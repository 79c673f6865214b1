use super::{Beacon, KalmanModel, KalmanTrack, TrackId};
use crate::assignment::{auction, SparseBenefits};

/// Result of a global-nearest-neighbour association round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(track id, beacon index)` pairs, sorted by track id.
    pub pairs: Vec<(TrackId, usize)>,
    /// Indices of beacons left without a track, ascending.
    pub unmatched: Vec<usize>,
}

/// Matches beacons to tracks one-to-one inside the gate.
///
/// Among all gated matchings the solver first maximises the number of pairs
/// and then minimises the summed `d²`. Tracks must already be predicted to
/// the beacons' step. Inputs are put in canonical order (tracks by id,
/// beacons by content) before solving, so the result does not depend on the
/// order of `beacons`; `d²` is resolved to 1e-6.
pub fn associate(
    model: &KalmanModel,
    tracks: &[KalmanTrack],
    beacons: &[Beacon],
    gate_threshold: f64,
) -> Association {
    let mut track_order: Vec<usize> = (0..tracks.len()).collect();
    track_order.sort_by_key(|&i| tracks[i].id);
    let mut beacon_order: Vec<usize> = (0..beacons.len()).collect();
    beacon_order.sort_by(|&a, &b| beacons[a].canonical_cmp(&beacons[b]));

    let mut gated: Vec<(usize, usize, f64)> = Vec::new();
    for (ti, &t) in track_order.iter().enumerate() {
        for (bi, &b) in beacon_order.iter().enumerate() {
            if let Ok(r) = model.gate_distance(&tracks[t], &beacons[b]) {
                if r.d2 <= gate_threshold {
                    gated.push((ti, bi, r.d2));
                }
            }
        }
    }

    let max_pairs = tracks.len().min(beacons.len()) as f64;
    let size = (tracks.len() + beacons.len()) as f64 + 1.0;
    // keep (max_pairs + 1) * gate * resolution * size well inside i64
    let mut resolution = 1e6;
    while (max_pairs + 1.0) * (gate_threshold.max(1.0) * resolution + 1.0) * size > 1e17 {
        resolution /= 10.0;
    }
    let q_gate = (gate_threshold * resolution).ceil() as i64 + 1;
    let per_pair = (max_pairs as i64 + 1) * q_gate;

    let mut benefits = SparseBenefits::new(track_order.len(), beacon_order.len());
    for &(ti, bi, d2) in &gated {
        let q = (d2 * resolution).round() as i64;
        benefits.push(ti, bi, per_pair - q);
    }
    let solved = auction(&benefits);

    let mut taken = vec![false; beacons.len()];
    let mut pairs: Vec<(TrackId, usize)> = solved
        .bidder_item
        .iter()
        .enumerate()
        .filter_map(|(ti, bi)| {
            let b = beacon_order[(*bi)?];
            taken[b] = true;
            Some((tracks[track_order[ti]].id, b))
        })
        .collect();
    pairs.sort_unstable();
    let unmatched = (0..beacons.len()).filter(|&b| !taken[b]).collect();
    Association { pairs, unmatched }
}
