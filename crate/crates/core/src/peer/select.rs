use rand::Rng;

use crate::registry::PeerRecord;

/// Number of peers fetched from an active list of `len` others:
/// `max(floor(len * alpha), 1)`, capped at `len`, and zero when `len == 0`.
pub fn fetch_count(len: usize, alpha: f64) -> usize {
    if len == 0 {
        return 0;
    }
    // the epsilon keeps products such as 100 * 0.29 from flooring one short
    let m = (len as f64 * alpha + 1e-9).floor() as usize;
    m.max(1).min(len)
}

/// Uniform sample without replacement of `fetch_count(active.len(), alpha)`
/// records. The caller removes itself from `active` first.
pub fn select_peers<R: Rng + ?Sized>(
    active: &[PeerRecord],
    alpha: f64,
    rng: &mut R,
) -> Vec<PeerRecord> {
    let m = fetch_count(active.len(), alpha);
    rand::seq::index::sample(rng, active.len(), m)
        .into_iter()
        .map(|i| active[i].clone())
        .collect()
}
