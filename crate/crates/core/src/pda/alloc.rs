use crate::error::{Error, Result};

pub type ItemId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationItem {
    pub item_id: ItemId,
    /// 0-based rank in the original ranking; also the item's default slot.
    pub original_rank: usize,
    pub pctr: f64,
    pub requested: Option<usize>,
}

/// Items to place on a page of `positions` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRequest {
    items: Vec<AllocationItem>,
    positions: usize,
}

impl AllocationRequest {
    /// Ranks must be `0..n` in some order, `n ≤ positions`, and requested
    /// slots must lie on the page.
    pub fn new(mut items: Vec<AllocationItem>, positions: usize) -> Result<Self> {
        if items.len() > positions {
            return Err(Error::InvalidArgument(format!(
                "{} items for {positions} positions",
                items.len()
            )));
        }
        items.sort_by_key(|i| i.original_rank);
        for (r, it) in items.iter().enumerate() {
            if it.original_rank != r {
                return Err(Error::InvalidArgument(
                    "original ranks must be 0..n without gaps".into(),
                ));
            }
            if let Some(p) = it.requested {
                if p >= positions {
                    return Err(Error::InvalidArgument(format!(
                        "requested position {p} outside [0, {positions})"
                    )));
                }
            }
        }
        Ok(Self { items, positions })
    }

    /// Items in original-rank order.
    pub fn items(&self) -> &[AllocationItem] {
        &self.items
    }

    pub fn positions(&self) -> usize {
        self.positions
    }
}

/// Next-free-slot lookup with path compression. `find(p)` is the first free
/// slot at or after `p`, or `len` when none is left.
struct FreeSlots {
    next: Vec<usize>,
}

impl FreeSlots {
    fn new(len: usize) -> Self {
        Self {
            next: (0..=len).collect(),
        }
    }

    fn find(&mut self, p: usize) -> usize {
        let mut root = p;
        while self.next[root] != root {
            root = self.next[root];
        }
        let mut cur = p;
        while self.next[cur] != root {
            let n = self.next[cur];
            self.next[cur] = root;
            cur = n;
        }
        root
    }

    fn take(&mut self, p: usize) {
        self.next[p] = p + 1;
    }
}

/// Places items on the page, slot → item.
///
/// Items with a requested slot go first, in original-rank order; an item
/// whose slot is taken moves to the next free later slot, or to the nearest
/// free earlier slot when nothing later is free. The remaining items then
/// fill the free slots front to back in original-rank order. With fewer
/// items than slots the trailing free slots stay empty.
pub fn resolve_conflicts(req: &AllocationRequest) -> Result<Vec<Option<ItemId>>> {
    let len = req.positions;
    let mut slots: Vec<Option<ItemId>> = vec![None; len];
    let mut free = FreeSlots::new(len);
    for it in req.items.iter() {
        let Some(p) = it.requested else { continue };
        let mut q = free.find(p);
        if q == len {
            q = (0..p)
                .rev()
                .find(|&e| slots[e].is_none())
                .expect("more slots than items");
        }
        slots[q] = Some(it.item_id);
        free.take(q);
    }
    let mut cursor = 0;
    for it in req.items.iter().filter(|i| i.requested.is_none()) {
        let q = free.find(cursor);
        slots[q] = Some(it.item_id);
        free.take(q);
        cursor = q;
    }
    Ok(slots)
}

#[cfg(test)]
pub(crate) fn resolve_by_scan(req: &AllocationRequest) -> Vec<Option<ItemId>> {
    let len = req.positions;
    let mut slots: Vec<Option<ItemId>> = vec![None; len];
    for it in &req.items {
        if let Some(p) = it.requested {
            let q = (p..len)
                .find(|&q| slots[q].is_none())
                .or_else(|| (0..p).rev().find(|&q| slots[q].is_none()))
                .unwrap();
            slots[q] = Some(it.item_id);
        }
    }
    for it in req.items.iter().filter(|i| i.requested.is_none()) {
        let q = (0..len).find(|&q| slots[q].is_none()).unwrap();
        slots[q] = Some(it.item_id);
    }
    slots
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn request(reqs: &[Option<usize>], positions: usize) -> AllocationRequest {
        let items = reqs
            .iter()
            .enumerate()
            .map(|(r, &requested)| AllocationItem {
                item_id: 100 + r,
                original_rank: r,
                pctr: 0.1,
                requested,
            })
            .collect();
        AllocationRequest::new(items, positions).unwrap()
    }

    #[test]
    fn higher_rank_wins_collision() {
        let out = resolve_conflicts(&request(&[Some(0), Some(0), None], 3)).unwrap();
        assert_eq!(out, vec![Some(100), Some(101), Some(102)]);
    }

    #[test]
    fn no_requests_is_identity() {
        let out = resolve_conflicts(&request(&[None; 5], 5)).unwrap();
        assert_eq!(out, (100..105).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn full_tail_falls_back_to_earlier_slot() {
        let out = resolve_conflicts(&request(&[Some(2), Some(2), None], 3)).unwrap();
        assert_eq!(out, vec![Some(102), Some(101), Some(100)]);
    }

    #[test]
    fn fewer_items_than_slots() {
        let out = resolve_conflicts(&request(&[Some(1)], 2)).unwrap();
        assert_eq!(out, vec![None, Some(100)]);
    }

    #[test]
    fn invalid_requests() {
        let it = |r, req| AllocationItem {
            item_id: r,
            original_rank: r,
            pctr: 0.1,
            requested: req,
        };
        assert!(AllocationRequest::new(vec![it(0, None), it(1, None), it(2, None)], 2).is_err());
        assert!(AllocationRequest::new(vec![it(0, Some(2))], 2).is_err());
        assert!(AllocationRequest::new(vec![it(1, None)], 2).is_err());
        assert!(AllocationRequest::new(vec![it(0, None), it(0, None)], 2).is_err());
    }

    #[test]
    fn move_target_to_front() {
        // The last-ranked item asks for slot 0; everything else shifts back.
        let out = resolve_conflicts(&request(&[None, None, None, Some(0)], 4)).unwrap();
        assert_eq!(out, vec![Some(103), Some(100), Some(101), Some(102)]);
    }

    proptest! {
        #[test]
        fn bijection_and_priority(
            reqs in prop::collection::vec(prop::option::of(0usize..8), 1..8),
            extra in 0usize..3,
        ) {
            let positions = reqs.len() + extra;
            let reqs: Vec<Option<usize>> = reqs.iter().map(|r| r.map(|p| p % positions)).collect();
            let req = request(&reqs, positions);
            let out = resolve_conflicts(&req).unwrap();
            prop_assert_eq!(&out, &resolve_by_scan(&req));
            let mut placed: Vec<usize> = out.iter().flatten().copied().collect();
            placed.sort();
            prop_assert_eq!(placed, (100..100 + reqs.len()).collect::<Vec<_>>());
            let pos = |id: usize| out.iter().position(|s| *s == Some(id)).unwrap();
            for x in 0..reqs.len() {
                for y in x + 1..reqs.len() {
                    if let (Some(p), Some(q)) = (reqs[x], reqs[y]) {
                        // The higher-ranked item lands first whenever the
                        // lower-ranked one still found a later slot.
                        if p == q && pos(100 + y) >= p {
                            prop_assert!(p <= pos(100 + x) && pos(100 + x) < pos(100 + y));
                        }
                    }
                }
            }
        }
    }
}
