//! Interdigitated batch layouts.
//!
//! A training batch holds `B` labeled images and `μB` unlabeled images, each
//! under a weak and a strong view, for `Q = 2(1+μ)B` slots in total. The slot
//! order matters because embedding fusion mixes each slot with its circular
//! successor. [`LayoutKind::HighI3`] places every labeled view directly in
//! front of the `μ` unlabeled images that share its augmentation:
//!
//! ```text
//! { x_i^w, ū_{i,1..μ}^w, x_i^s, ū_{i,1..μ}^s }  for i = 1..B
//! ```
//!
//! The other kinds exist for layout ablations.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::AugKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// All labeled views first, then all unlabeled views.
    LowI,
    /// `2(μ+1)` repeated blocks of `{x^w, x^s, ū^w, ū^s}` sub-batches.
    HighI1,
    /// Per labeled index: `{x^w, x^s, ū^w×μ, ū^s×μ}`.
    HighI2,
    /// Per labeled index: `{x^w, ū^w×μ, x^s, ū^s×μ}`.
    #[default]
    HighI3,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 4] = [
        LayoutKind::LowI,
        LayoutKind::HighI1,
        LayoutKind::HighI2,
        LayoutKind::HighI3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::LowI => "low_i",
            LayoutKind::HighI1 => "high_i1",
            LayoutKind::HighI2 => "high_i2",
            LayoutKind::HighI3 => "high_i3",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayoutKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown layout `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Labeled,
    Unlabeled,
}

/// Identity of one slot in a batch.
///
/// `group` is the labeled index `i` in `[0, B)`. `member` is 0 for the labeled
/// slot itself and `m` in `[1, μ]` for the unlabeled images paired with it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotTag {
    pub role: Role,
    pub aug: AugKind,
    pub group: usize,
    pub member: usize,
}

impl SlotTag {
    pub fn labeled(aug: AugKind, group: usize) -> Self {
        SlotTag {
            role: Role::Labeled,
            aug,
            group,
            member: 0,
        }
    }

    /// Tag for the unlabeled image at flat index `j` of a `μB` array.
    pub fn unlabeled_flat(aug: AugKind, j: usize, mu: usize) -> Self {
        SlotTag {
            role: Role::Unlabeled,
            aug,
            group: j / mu,
            member: j % mu + 1,
        }
    }

    /// Row index of this slot within its grouped array (`i` for labeled,
    /// `i·μ + m − 1` for unlabeled).
    pub fn grouped_row(&self, mu: usize) -> usize {
        match self.role {
            Role::Labeled => self.group,
            Role::Unlabeled => self.group * mu + self.member - 1,
        }
    }
}

/// The slot order for a layout, without any samples attached.
pub fn slot_order(b: usize, mu: usize, kind: LayoutKind) -> Result<Vec<SlotTag>> {
    if b == 0 || mu == 0 {
        return Err(Error::batch(format!(
            "layout needs B >= 1 and mu >= 1, got B={b}, mu={mu}"
        )));
    }
    let lab = |aug, i| SlotTag::labeled(aug, i);
    let unl = |aug, j| SlotTag::unlabeled_flat(aug, j, mu);
    let mut tags = Vec::with_capacity(2 * (1 + mu) * b);
    match kind {
        LayoutKind::LowI => {
            tags.extend((0..b).map(|i| lab(AugKind::Weak, i)));
            tags.extend((0..b).map(|i| lab(AugKind::Strong, i)));
            tags.extend((0..mu * b).map(|j| unl(AugKind::Weak, j)));
            tags.extend((0..mu * b).map(|j| unl(AugKind::Strong, j)));
        }
        LayoutKind::HighI1 => {
            let blocks = 2 * (mu + 1);
            if !b.is_multiple_of(blocks) {
                return Err(Error::batch(format!(
                    "high_i1 needs B divisible by 2(mu+1) = {blocks}, got B={b}"
                )));
            }
            let per = b / blocks;
            for blk in 0..blocks {
                let ls = blk * per..(blk + 1) * per;
                let us = blk * per * mu..(blk + 1) * per * mu;
                tags.extend(ls.clone().map(|i| lab(AugKind::Weak, i)));
                tags.extend(ls.map(|i| lab(AugKind::Strong, i)));
                tags.extend(us.clone().map(|j| unl(AugKind::Weak, j)));
                tags.extend(us.map(|j| unl(AugKind::Strong, j)));
            }
        }
        LayoutKind::HighI2 => {
            for i in 0..b {
                tags.push(lab(AugKind::Weak, i));
                tags.push(lab(AugKind::Strong, i));
                tags.extend((i * mu..(i + 1) * mu).map(|j| unl(AugKind::Weak, j)));
                tags.extend((i * mu..(i + 1) * mu).map(|j| unl(AugKind::Strong, j)));
            }
        }
        LayoutKind::HighI3 => {
            for i in 0..b {
                tags.push(lab(AugKind::Weak, i));
                tags.extend((i * mu..(i + 1) * mu).map(|j| unl(AugKind::Weak, j)));
                tags.push(lab(AugKind::Strong, i));
                tags.extend((i * mu..(i + 1) * mu).map(|j| unl(AugKind::Strong, j)));
            }
        }
    }
    Ok(tags)
}

#[derive(Clone, Debug)]
pub struct Slot<T> {
    pub sample: T,
    pub tag: SlotTag,
}

/// `Q` samples in layout order, each carrying its [`SlotTag`].
#[derive(Clone, Debug)]
pub struct OrderedBatch<T> {
    pub slots: Vec<Slot<T>>,
    pub layout: LayoutKind,
    b: usize,
    mu: usize,
}

/// Rows of a `Q`-row matrix regrouped by role and view.
///
/// `q_w` and `q_s` are `μB` rows where row `i·μ + m − 1` is member `m` of
/// group `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedRows {
    pub p_w: Array2<f64>,
    pub p_s: Array2<f64>,
    pub q_w: Array2<f64>,
    pub q_s: Array2<f64>,
    pub mu: usize,
}

impl GroupedRows {
    pub fn zeros(b: usize, mu: usize, cols: usize) -> Self {
        GroupedRows {
            p_w: Array2::zeros((b, cols)),
            p_s: Array2::zeros((b, cols)),
            q_w: Array2::zeros((b * mu, cols)),
            q_s: Array2::zeros((b * mu, cols)),
            mu,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.p_w.nrows()
    }

    pub fn row(&self, tag: &SlotTag) -> ArrayView1<'_, f64> {
        self.array(tag.role, tag.aug).row(tag.grouped_row(self.mu))
    }

    pub fn array(&self, role: Role, aug: AugKind) -> &Array2<f64> {
        match (role, aug) {
            (Role::Labeled, AugKind::Weak) => &self.p_w,
            (Role::Labeled, AugKind::Strong) => &self.p_s,
            (Role::Unlabeled, AugKind::Weak) => &self.q_w,
            (Role::Unlabeled, AugKind::Strong) => &self.q_s,
        }
    }

    pub fn array_mut(&mut self, role: Role, aug: AugKind) -> &mut Array2<f64> {
        match (role, aug) {
            (Role::Labeled, AugKind::Weak) => &mut self.p_w,
            (Role::Labeled, AugKind::Strong) => &mut self.p_s,
            (Role::Unlabeled, AugKind::Weak) => &mut self.q_w,
            (Role::Unlabeled, AugKind::Strong) => &mut self.q_s,
        }
    }
}

/// Arrange labeled and unlabeled views into a `Q`-slot batch.
///
/// The `m`-th unlabeled member of group `i` must sit at flat index
/// `i·μ + m − 1` of `unlabeled_w` / `unlabeled_s`. `μ` is inferred from the
/// array lengths.
pub fn interdigitate<T>(
    labeled_w: Vec<T>,
    labeled_s: Vec<T>,
    unlabeled_w: Vec<T>,
    unlabeled_s: Vec<T>,
    kind: LayoutKind,
) -> Result<OrderedBatch<T>> {
    let b = labeled_w.len();
    if b == 0 || labeled_s.len() != b {
        return Err(Error::batch(format!(
            "labeled views must be non-empty and equal length, got {} weak / {} strong",
            b,
            labeled_s.len()
        )));
    }
    let nu = unlabeled_w.len();
    if nu == 0 || !nu.is_multiple_of(b) || unlabeled_s.len() != nu {
        return Err(Error::batch(format!(
            "unlabeled views must hold mu*B items each with mu >= 1 (B={b}), got {} weak / {} strong",
            nu,
            unlabeled_s.len()
        )));
    }
    let mu = nu / b;
    let order = slot_order(b, mu, kind)?;

    let mut pools: [Vec<Option<T>>; 4] = [
        labeled_w.into_iter().map(Some).collect(),
        labeled_s.into_iter().map(Some).collect(),
        unlabeled_w.into_iter().map(Some).collect(),
        unlabeled_s.into_iter().map(Some).collect(),
    ];
    let mut slots = Vec::with_capacity(order.len());
    for tag in order {
        let pool = pool_index(tag.role, tag.aug);
        let sample = pools[pool][tag.grouped_row(mu)]
            .take()
            .ok_or_else(|| Error::Internal(format!("slot {tag:?} filled twice")))?;
        slots.push(Slot { sample, tag });
    }
    Ok(OrderedBatch {
        slots,
        layout: kind,
        b,
        mu,
    })
}

fn pool_index(role: Role, aug: AugKind) -> usize {
    match (role, aug) {
        (Role::Labeled, AugKind::Weak) => 0,
        (Role::Labeled, AugKind::Strong) => 1,
        (Role::Unlabeled, AugKind::Weak) => 2,
        (Role::Unlabeled, AugKind::Strong) => 3,
    }
}

/// Counts of circularly adjacent slot pairs, keyed by role pairing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    /// Labeled–unlabeled pairs in either order.
    pub lu: usize,
    pub ll: usize,
    pub uu: usize,
}

impl<T> OrderedBatch<T> {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn tags(&self) -> impl Iterator<Item = &SlotTag> + '_ {
        self.slots.iter().map(|s| &s.tag)
    }

    pub fn samples(&self) -> impl Iterator<Item = &T> + '_ {
        self.slots.iter().map(|s| &s.sample)
    }

    /// Replace every sample through `f`, keeping tags and order.
    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> OrderedBatch<U> {
        OrderedBatch {
            slots: self
                .slots
                .into_iter()
                .map(|s| Slot {
                    sample: f(s.sample),
                    tag: s.tag,
                })
                .collect(),
            layout: self.layout,
            b: self.b,
            mu: self.mu,
        }
    }

    pub fn count_lu_adjacencies(&self) -> Adjacency {
        count_adjacencies(self.slots.iter().map(|s| s.tag.role))
    }

    /// Regroup a `Q`-row matrix (one row per slot, in slot order).
    pub fn deinterleave(&self, outputs: &Array2<f64>) -> Result<GroupedRows> {
        if outputs.nrows() != self.slots.len() {
            return Err(Error::shape(format!(
                "deinterleave expects {} rows, got {}",
                self.slots.len(),
                outputs.nrows()
            )));
        }
        let mut grouped = GroupedRows::zeros(self.b, self.mu, outputs.ncols());
        for (slot, row) in self.slots.iter().zip(outputs.rows()) {
            let tag = slot.tag;
            grouped
                .array_mut(tag.role, tag.aug)
                .row_mut(tag.grouped_row(self.mu))
                .assign(&row);
        }
        Ok(grouped)
    }

    /// Inverse of [`OrderedBatch::deinterleave`]: lay grouped rows back out in
    /// slot order.
    pub fn interleave_rows(&self, grouped: &GroupedRows) -> Result<Array2<f64>> {
        if grouped.batch_size() != self.b || grouped.mu != self.mu {
            return Err(Error::shape(format!(
                "grouped rows are for B={}, mu={}, batch is B={}, mu={}",
                grouped.batch_size(),
                grouped.mu,
                self.b,
                self.mu
            )));
        }
        let cols = grouped.p_w.ncols();
        let mut out = Array2::zeros((self.slots.len(), cols));
        for (slot, mut row) in self.slots.iter().zip(out.rows_mut()) {
            row.assign(&grouped.row(&slot.tag));
        }
        Ok(out)
    }
}

/// Count circular adjacencies in a role sequence; the total always equals its
/// length.
pub fn count_adjacencies(roles: impl IntoIterator<Item = Role>) -> Adjacency {
    let roles: Vec<Role> = roles.into_iter().collect();
    let mut adj = Adjacency::default();
    let n = roles.len();
    for p in 0..n {
        match (roles[p], roles[(p + 1) % n]) {
            (Role::Labeled, Role::Labeled) => adj.ll += 1,
            (Role::Unlabeled, Role::Unlabeled) => adj.uu += 1,
            _ => adj.lu += 1,
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(b: usize, mu: usize, kind: LayoutKind) -> Vec<String> {
        slot_order(b, mu, kind)
            .unwrap()
            .iter()
            .map(|t| {
                let v = if t.aug == AugKind::Weak { "w" } else { "s" };
                match t.role {
                    Role::Labeled => format!("x{}{v}", t.group + 1),
                    Role::Unlabeled => format!("u{}{v}", t.group * mu + t.member),
                }
            })
            .collect()
    }

    #[test]
    fn high_i3_single_group() {
        assert_eq!(names(1, 1, LayoutKind::HighI3), ["x1w", "u1w", "x1s", "u1s"]);
    }

    #[test]
    fn low_i_single_group() {
        assert_eq!(names(1, 1, LayoutKind::LowI), ["x1w", "x1s", "u1w", "u1s"]);
    }

    #[test]
    fn high_i3_two_groups_of_two() {
        assert_eq!(
            names(2, 2, LayoutKind::HighI3),
            ["x1w", "u1w", "u2w", "x1s", "u1s", "u2s", "x2w", "u3w", "u4w", "x2s", "u3s", "u4s"]
        );
    }

    #[test]
    fn high_i2_groups_views_together() {
        assert_eq!(
            names(2, 1, LayoutKind::HighI2),
            ["x1w", "x1s", "u1w", "u1s", "x2w", "x2s", "u2w", "u2s"]
        );
    }

    #[test]
    fn high_i1_blocks() {
        // B=4, mu=1: four blocks holding one labeled and one unlabeled image each
        assert_eq!(
            names(4, 1, LayoutKind::HighI1)[..8],
            ["x1w", "x1s", "u1w", "u1s", "x2w", "x2s", "u2w", "u2s"]
        );
        assert!(matches!(
            slot_order(2, 1, LayoutKind::HighI1),
            Err(Error::BatchAssembly(_))
        ));
    }

    #[test]
    fn adjacency_counts_small_layouts() {
        let hi = count_adjacencies(slot_order(1, 1, LayoutKind::HighI3).unwrap().iter().map(|t| t.role));
        assert_eq!(hi, Adjacency { lu: 4, ll: 0, uu: 0 });
        let lo = count_adjacencies(slot_order(1, 1, LayoutKind::LowI).unwrap().iter().map(|t| t.role));
        assert_eq!(lo, Adjacency { lu: 2, ll: 1, uu: 1 });
    }

    #[test]
    fn interdigitate_rejects_length_mismatch() {
        let err = interdigitate(vec![1], vec![2], vec![3, 4], vec![5], LayoutKind::HighI3);
        assert!(matches!(err, Err(Error::BatchAssembly(_))));
        let err = interdigitate(vec![1, 2], vec![2, 3], vec![3, 4, 5], vec![5, 6, 7], LayoutKind::HighI3);
        assert!(matches!(err, Err(Error::BatchAssembly(_))));
        let err = interdigitate::<u8>(vec![], vec![], vec![], vec![], LayoutKind::LowI);
        assert!(matches!(err, Err(Error::BatchAssembly(_))));
    }

    #[test]
    fn deinterleave_slot_indices() {
        let batch = interdigitate(vec![0], vec![0], vec![0], vec![0], LayoutKind::HighI3).unwrap();
        let outputs = Array2::from_shape_fn((4, 1), |(r, _)| r as f64);
        let g = batch.deinterleave(&outputs).unwrap();
        assert_eq!(g.p_w[[0, 0]], 0.0);
        assert_eq!(g.q_w[[0, 0]], 1.0);
        assert_eq!(g.p_s[[0, 0]], 2.0);
        assert_eq!(g.q_s[[0, 0]], 3.0);
        assert!(batch.deinterleave(&Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn deinterleave_second_group_strong_member() {
        let batch = interdigitate(vec![0; 2], vec![0; 2], vec![0; 4], vec![0; 4], LayoutKind::HighI3).unwrap();
        let outputs = Array2::from_shape_fn((12, 1), |(r, _)| r as f64);
        let g = batch.deinterleave(&outputs).unwrap();
        // q_{2,1}^s is flat row 1*mu + 0
        assert_eq!(g.q_s[[2, 0]], 10.0);
    }

    #[test]
    fn interleave_inverts_deinterleave() {
        let batch = interdigitate(vec![0; 4], vec![0; 4], vec![0; 28], vec![0; 28], LayoutKind::HighI3).unwrap();
        let outputs = Array2::from_shape_fn((64, 3), |(r, c)| (r * 3 + c) as f64);
        let g = batch.deinterleave(&outputs).unwrap();
        assert_eq!(batch.interleave_rows(&g).unwrap(), outputs);
    }

    #[test]
    fn layout_names_round_trip() {
        for k in LayoutKind::ALL {
            assert_eq!(k.as_str().parse::<LayoutKind>().unwrap(), k);
        }
        assert!("high_i4".parse::<LayoutKind>().is_err());
        assert_eq!(LayoutKind::default(), LayoutKind::HighI3);
    }
}
