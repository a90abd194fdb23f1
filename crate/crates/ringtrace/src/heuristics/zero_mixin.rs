//! Rings with a single member trivially reveal their true spend.

use crate::chain::ChainStore;
use crate::labels::{HeuristicId, LabelSet, Labeler};

/// Labels the sole member of every size-1 ring as the true spend.
/// Consequences (the same output appearing elsewhere) are left to
/// propagation.
pub fn zero_mixin(chain: &ChainStore) -> LabelSet {
    let mut out = Labeler::new(HeuristicId::ZeroMixin, chain);
    for (ring, _tx) in chain.rings() {
        if let [only] = ring.members.as_slice() {
            out.true_spend(&ring.ring_id, *only);
        }
    }
    out.finish()
}
