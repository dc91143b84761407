//! Product-form distributions over cuts.
//!
//! A prior assigns each node `i` the probability `Pr(i)` that the cut lies
//! at or above `i` given that it does not lie above `parent(i)`. The
//! probability of a cut is the product of `1 - Pr(i)` over nodes strictly
//! above it and `Pr(j)` over its members.

use crate::error::{Error, Result};
use crate::hierarchy::{log2_big, Cut, CutCountTable, Hierarchy, NodeId};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    values: Vec<f64>,
}

impl Prior {
    /// `Pr(i) = 1/N(i)`: every cut is equally likely.
    pub fn uniform(h: &Hierarchy, counts: &CutCountTable) -> Self {
        let values = (0..h.n_nodes())
            .map(|v| {
                if h.is_leaf(v) {
                    1.0
                } else {
                    (-log2_big(counts.get(v))).exp2().max(f64::MIN_POSITIVE)
                }
            })
            .collect();
        Prior { values }
    }

    /// `Pr(i) = alpha` on every internal node.
    pub fn constant(h: &Hierarchy, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Prior { values: (0..h.n_nodes()).map(|v| if h.is_leaf(v) { 1.0 } else { alpha }).collect() })
    }

    /// Arbitrary per-node values; leaves are forced to 1.
    pub fn explicit(h: &Hierarchy, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != h.n_nodes() {
            return Err(Error::LengthMismatch { expected: h.n_nodes(), got: values.len() });
        }
        if let Some(p) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
        for v in values.iter_mut().take(h.n_leaves()) {
            *v = 1.0;
        }
        Ok(Prior { values })
    }

    pub fn get(&self, v: NodeId) -> f64 {
        self.values[v]
    }

    pub fn set(&mut self, v: NodeId, p: f64) {
        self.values[v] = p;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cut_probability(&self, h: &Hierarchy, cut: &Cut) -> Result<f64> {
        Ok(self.log_cut_probability(h, cut)?.exp())
    }

    /// Natural log of the cut probability; `-inf` for impossible cuts.
    pub fn log_cut_probability(&self, h: &Hierarchy, cut: &Cut) -> Result<f64> {
        h.validate_cut(cut)?;
        let mut total = 0.0;
        let mut stack = vec![h.root()];
        while let Some(v) = stack.pop() {
            let p = self.values[v];
            if cut.contains(v) {
                total += p.ln();
            } else {
                total += (1.0 - p).ln();
                let [l, r] = h.children(v).expect("validated cut covers every leaf");
                stack.push(l);
                stack.push(r);
            }
        }
        Ok(total)
    }

    /// Draws a cut top-down: stop at `i` with probability `Pr(i)`, otherwise
    /// descend into both children.
    pub fn sample_cut<R: Rng + ?Sized>(&self, h: &Hierarchy, rng: &mut R) -> Cut {
        let mut out = Vec::new();
        let mut stack = vec![h.root()];
        while let Some(v) = stack.pop() {
            match h.children(v) {
                Some([l, r]) if rng.gen::<f64>() >= self.values[v] => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => out.push(v),
            }
        }
        Cut::new(out)
    }

    /// Most probable cut; ties go to the shallower option.
    pub fn map_cut(&self, h: &Hierarchy) -> Cut {
        let mut best = vec![0.0f64; h.n_nodes()];
        let mut stop = vec![true; h.n_nodes()];
        for v in h.postorder() {
            if let Some([l, r]) = h.children(v) {
                let p = self.values[v];
                let here = p.clamp(LOG_FLOOR, 1.0).ln();
                let below = (1.0 - p).clamp(LOG_FLOOR, 1.0).ln() + best[l] + best[r];
                let tol = 1e-12 * (1.0 + here.abs().max(below.abs()));
                if here >= below - tol {
                    best[v] = here;
                } else {
                    best[v] = below;
                    stop[v] = false;
                }
            }
        }
        h.cut_from_predicate(|v| stop[v])
    }

    pub fn to_file(&self) -> PriorFile {
        PriorFile { kind: PriorKind::Explicit, alpha: None, values: Some(self.values.clone()) }
    }

    pub fn load(path: impl AsRef<Path>, h: &Hierarchy) -> Result<Self> {
        let f: PriorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        f.resolve(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Uniform,
    Constant,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorFile {
    pub kind: PriorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl PriorFile {
    pub fn resolve(&self, h: &Hierarchy) -> Result<Prior> {
        match self.kind {
            PriorKind::Uniform => Ok(Prior::uniform(h, &h.count_cuts())),
            PriorKind::Constant => {
                let a = self.alpha.ok_or_else(|| Error::InvalidParameter("constant prior needs alpha".into()))?;
                Prior::constant(h, a)
            }
            PriorKind::Explicit => {
                let v = self.values.clone().ok_or_else(|| Error::InvalidParameter("explicit prior needs values".into()))?;
                Prior::explicit(h, v)
            }
        }
    }
}

/// Number of leaves of the tree spanned by the internal nodes on or above
/// the cut: internal members plus nodes above the cut whose children are
/// both leaves.
pub fn k_tilde(h: &Hierarchy, cut: &Cut) -> Result<usize> {
    h.validate_cut(cut)?;
    let mut count = 0;
    let mut stack = vec![h.root()];
    while let Some(v) = stack.pop() {
        let [l, r] = match h.children(v) {
            Some(c) => c,
            None => continue,
        };
        if cut.contains(v) {
            count += 1;
        } else if h.is_leaf(l) && h.is_leaf(r) {
            count += 1;
        } else {
            stack.push(l);
            stack.push(r);
        }
    }
    Ok(count)
}

/// Hard instance family: a top subtree whose `B` frontier nodes each either
/// join the cut or are split into their two children, uniformly at random.
#[derive(Debug, Clone)]
pub struct AdversarialPrior {
    /// Product-form encoding with every value floored into `[eps, 1-eps]`.
    pub prior: Prior,
    /// Exact product-form encoding, using 0 and 1 where forced.
    pub exact: Prior,
    /// Frontier nodes whose membership is decided by a fair coin.
    pub frontier: Vec<NodeId>,
    /// Internal nodes strictly above the frontier.
    pub above: Vec<NodeId>,
    /// Leaves hanging directly off `above`, always members.
    pub fixed: Vec<NodeId>,
}

pub const ADVERSARIAL_EPS: f64 = 1e-6;

impl AdversarialPrior {
    pub fn new(h: &Hierarchy, budget: usize) -> Result<Self> {
        let available = h.sibling_leaf_count();
        if budget == 0 || budget > available {
            return Err(Error::BudgetTooLarge { budget, available });
        }
        let internal_children =
            |v: NodeId| h.children(v).map_or(Vec::new(), |c| c.into_iter().filter(|&x| !h.is_leaf(x)).collect());

        // breadth-first growth; expanding a frontier node changes the
        // frontier size by (#internal children - 1) which is 0 or +1 here
        let mut is_above = vec![false; h.n_nodes()];
        let mut frontier = std::collections::VecDeque::from([h.root()]);
        let mut settled = Vec::new();
        while frontier.len() + settled.len() < budget {
            let v = frontier.pop_front().expect("budget is within the sibling-leaf count");
            let kids = internal_children(v);
            if kids.is_empty() {
                settled.push(v);
                continue;
            }
            is_above[v] = true;
            frontier.extend(kids);
        }
        let mut frontier: Vec<NodeId> = frontier.into_iter().chain(settled).collect();
        frontier.sort_unstable();
        let above: Vec<NodeId> = (0..h.n_nodes()).filter(|&v| is_above[v]).collect();
        let fixed: Vec<NodeId> =
            above.iter().flat_map(|&v| h.children(v).unwrap()).filter(|&x| h.is_leaf(x)).collect();

        let mut exact = vec![0.5f64; h.n_nodes()];
        for v in 0..h.n_leaves() {
            exact[v] = 1.0;
        }
        for &v in &above {
            exact[v] = 0.0;
        }
        for &v in &frontier {
            exact[v] = 0.5;
            for c in h.children(v).unwrap() {
                exact[c] = 1.0;
            }
        }
        let floored = exact
            .iter()
            .enumerate()
            .map(|(v, &p)| if h.is_leaf(v) { 1.0 } else { p.clamp(ADVERSARIAL_EPS, 1.0 - ADVERSARIAL_EPS) })
            .collect();
        Ok(Self { prior: Prior { values: floored }, exact: Prior { values: exact }, frontier, above, fixed })
    }

    pub fn budget(&self) -> usize {
        self.frontier.len()
    }

    /// The supported cut selected by `mask`: bit `k` set splits `frontier[k]`.
    pub fn support_cut(&self, h: &Hierarchy, mask: u64) -> Cut {
        let mut nodes = self.fixed.clone();
        for (k, &v) in self.frontier.iter().enumerate() {
            if mask >> k & 1 == 1 {
                nodes.extend(h.children(v).unwrap());
            } else {
                nodes.push(v);
            }
        }
        Cut::new(nodes)
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: &Hierarchy, rng: &mut R) -> Cut {
        let mut nodes = self.fixed.clone();
        for &v in &self.frontier {
            if rng.gen::<bool>() {
                nodes.extend(h.children(v).unwrap());
            } else {
                nodes.push(v);
            }
        }
        Cut::new(nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced4() -> Hierarchy {
        Hierarchy::from_parents(&[Some(4), Some(4), Some(5), Some(5), Some(6), Some(6), None], vec![]).unwrap()
    }

    #[test]
    fn constant_half_singletons() {
        let h = balanced4();
        let p = Prior::constant(&h, 0.5).unwrap();
        let cut = Cut::new(vec![0, 1, 2, 3]);
        assert!((p.cut_probability(&h, &cut).unwrap() - 0.125).abs() < 1e-15);
        assert!(Prior::constant(&h, 1.0).is_err());
    }

    #[test]
    fn map_prefers_root_for_heavy_alpha() {
        let h = balanced4();
        let p = Prior::constant(&h, 0.9).unwrap();
        assert_eq!(p.map_cut(&h), Cut::new(vec![6]));
    }

    #[test]
    fn map_tie_goes_shallow() {
        // alpha = 0.5 on a cherry: {root} and {x0,x1} both have probability 1/2
        let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap();
        let p = Prior::constant(&h, 0.5).unwrap();
        assert_eq!(p.map_cut(&h), Cut::new(vec![2]));
    }

    #[test]
    fn adversarial_cherry() {
        let h = Hierarchy::from_parents(&[Some(2), Some(2), None], vec![]).unwrap();
        let adv = AdversarialPrior::new(&h, 1).unwrap();
        assert_eq!(adv.support_cut(&h, 0), Cut::new(vec![2]));
        assert_eq!(adv.support_cut(&h, 1), Cut::new(vec![0, 1]));
        assert!(AdversarialPrior::new(&h, 2).is_err());
    }
}
