//! Backfitting MCMC for sum-of-trees models.
//!
//! Each sweep visits every tree: form the partial residual against the other
//! trees, propose a grow, prune or change move (leaf parameters integrated
//! out), accept by Metropolis-Hastings, then draw the tree's leaf parameters
//! from their conjugate normal full conditional. After the sweep the residual
//! variance (continuous) or the probit latents are refreshed, followed by the
//! DART split-probability update when enabled.

use rand::Rng;

use super::config::BartConfig;
use super::dart::{self, DartState};
use super::tree::{Forest, ForestKind, Node, Tree};
use crate::dist::{chi_squared, normal, probit_latent};
use crate::rng::StreamRng;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct WNode {
    parent: u32,
    left: u32,
    right: u32,
    var: u32,
    cut: f64,
    depth: u32,
    leaf: bool,
    splittable: bool,
    value: f64,
}

impl WNode {
    fn leaf(parent: u32, depth: u32, splittable: bool) -> Self {
        Self {
            parent,
            left: NONE,
            right: NONE,
            var: NONE,
            cut: 0.0,
            depth,
            leaf: true,
            splittable,
            value: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct WTree {
    nodes: Vec<WNode>,
    live: Vec<bool>,
    free: Vec<u32>,
}

impl WTree {
    fn new(root_splittable: bool) -> Self {
        Self {
            nodes: vec![WNode::leaf(NONE, 0, root_splittable)],
            live: vec![true],
            free: Vec::new(),
        }
    }

    fn alloc(&mut self, node: WNode) -> u32 {
        if let Some(k) = self.free.pop() {
            self.nodes[k as usize] = node;
            self.live[k as usize] = true;
            k
        } else {
            self.nodes.push(node);
            self.live.push(true);
            (self.nodes.len() - 1) as u32
        }
    }

    fn release(&mut self, k: u32) {
        self.live[k as usize] = false;
        self.free.push(k);
    }

    fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&k| self.live[k])
    }

    fn good_leaves(&self) -> Vec<u32> {
        self.ids()
            .filter(|&k| self.nodes[k].leaf && self.nodes[k].splittable)
            .map(|k| k as u32)
            .collect()
    }

    fn is_nog(&self, k: usize) -> bool {
        let n = &self.nodes[k];
        !n.leaf && self.nodes[n.left as usize].leaf && self.nodes[n.right as usize].leaf
    }

    fn nogs(&self) -> Vec<u32> {
        self.ids().filter(|&k| self.is_nog(k)).map(|k| k as u32).collect()
    }

    fn count_splits(&self, counts: &mut [usize]) {
        for k in self.ids() {
            if !self.nodes[k].leaf {
                counts[self.nodes[k].var as usize] += 1;
            }
        }
    }

    fn compact(&self, scale: f64) -> Tree {
        let mut out = vec![Node::leaf(0.0)];
        let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
        while let Some((wi, oi)) = queue.pop_front() {
            let n = &self.nodes[wi];
            if n.leaf {
                out[oi] = Node::leaf(n.value * scale);
            } else {
                let l = out.len();
                out.push(Node::leaf(0.0));
                out.push(Node::leaf(0.0));
                out[oi] = Node::split(n.var as usize, n.cut, l);
                queue.push_back((n.left as usize, l));
                queue.push_back((n.right as usize, l + 1));
            }
        }
        Tree { nodes: out }
    }
}

/// Column-major training matrix.
pub(crate) struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub n: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Self {
        let n = rows.len();
        let mut cols = vec![Vec::with_capacity(n); p];
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                cols[j].push(*v);
            }
        }
        Self { cols, n }
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    fn splittable(&self, obs: &[u32]) -> bool {
        if obs.len() < 2 {
            return false;
        }
        self.cols.iter().any(|c| {
            let first = c[obs[0] as usize];
            obs.iter().any(|&i| c[i as usize] != first)
        })
    }
}

/// Static settings of one chain.
pub(crate) struct ChainSpec<'a> {
    pub kind: ForestKind,
    pub cfg: &'a BartConfig,
    pub leaf_sd: f64,
    pub sigma_df: f64,
    pub sigma_lambda: f64,
    /// Initial residual SD (internal scale).
    pub sigma_init: f64,
    /// Scale applied to leaves and σ when storing draws.
    pub out_scale: f64,
    pub out_offset: f64,
}

struct MoveProbs {
    grow: f64,
    prune: f64,
    change: f64,
}

impl MoveProbs {
    fn at(&self, can_grow: bool, internal: bool) -> (f64, f64, f64) {
        let g = if can_grow { self.grow } else { 0.0 };
        let p = if internal { self.prune } else { 0.0 };
        let c = if internal { self.change } else { 0.0 };
        let z = g + p + c;
        if z == 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            (g / z, p / z, c / z)
        }
    }
}

struct State<'a> {
    x: &'a Columns,
    spec: &'a ChainSpec<'a>,
    trees: Vec<WTree>,
    leaf_of: Vec<Vec<u32>>,
    fit: Vec<f64>,
    target: Vec<f64>,
    resid: Vec<f64>,
    sigma: f64,
    split_probs: Vec<f64>,
    dart: DartState,
    moves: MoveProbs,
    scratch: Vec<u32>,
    left_obs: Vec<u32>,
    right_obs: Vec<u32>,
}

fn leaf_loglik(n: usize, s: f64, sigma2: f64, tau2: f64) -> f64 {
    let denom = sigma2 + n as f64 * tau2;
    0.5 * (sigma2 / denom).ln() + tau2 * s * s / (2.0 * sigma2 * denom)
}

impl<'a> State<'a> {
    fn p_split(&self, depth: u32) -> f64 {
        let tp = &self.spec.cfg.tree_prior;
        tp.alpha * (1.0 + depth as f64).powf(-tp.beta)
    }

    fn ln_no_split(&self, depth: u32, splittable: bool) -> f64 {
        if splittable {
            (1.0 - self.p_split(depth)).ln()
        } else {
            0.0
        }
    }

    fn gather(&mut self, k: usize, nodes: &[u32]) {
        self.scratch.clear();
        let lo = &self.leaf_of[k];
        for (i, &l) in lo.iter().enumerate() {
            if nodes.contains(&l) {
                self.scratch.push(i as u32);
            }
        }
    }

    fn sum_resid(&self, obs: &[u32]) -> f64 {
        obs.iter().map(|&i| self.resid[i as usize]).sum()
    }

    /// Draws a splitting rule `(var, cut)` for the cell holding `self.scratch`.
    fn draw_rule(&mut self, rng: &mut StreamRng) -> Option<(usize, f64)> {
        let obs = &self.scratch;
        if obs.len() < 2 {
            return None;
        }
        let mut avail = Vec::with_capacity(self.x.p());
        let mut total = 0.0;
        for (j, c) in self.x.cols.iter().enumerate() {
            let first = c[obs[0] as usize];
            if obs.iter().any(|&i| c[i as usize] != first) {
                avail.push(j);
                total += self.split_probs[j];
            }
        }
        if avail.is_empty() {
            return None;
        }
        let var = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = *avail.last().unwrap();
            for &j in &avail {
                acc += self.split_probs[j];
                if u < acc {
                    pick = j;
                    break;
                }
            }
            pick
        } else {
            avail[rng.random_range(0..avail.len())]
        };
        let col = &self.x.cols[var];
        let mut vals: Vec<f64> = obs.iter().map(|&i| col[i as usize]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        let cut = vals[1 + rng.random_range(0..vals.len() - 1)];
        Some((var, cut))
    }

    fn partition(&mut self, var: usize, cut: f64) {
        self.left_obs.clear();
        self.right_obs.clear();
        let col = &self.x.cols[var];
        for &i in &self.scratch {
            if col[i as usize] < cut {
                self.left_obs.push(i);
            } else {
                self.right_obs.push(i);
            }
        }
    }

    fn sweep(&mut self, rng: &mut StreamRng) {
        let sigma2 = self.sigma * self.sigma;
        let tau2 = self.spec.leaf_sd * self.spec.leaf_sd;
        for k in 0..self.trees.len() {
            {
                let tree = &self.trees[k];
                for i in 0..self.x.n {
                    let v = tree.nodes[self.leaf_of[k][i] as usize].value;
                    self.resid[i] = self.target[i] - self.fit[i] + v;
                }
            }
            self.propose(k, rng, sigma2, tau2);
            self.draw_leaves(k, rng, sigma2, tau2);
            let tree = &self.trees[k];
            for i in 0..self.x.n {
                self.fit[i] = self.target[i] - self.resid[i] + tree.nodes[self.leaf_of[k][i] as usize].value;
            }
        }
        self.refresh_fit();
    }

    fn refresh_fit(&mut self) {
        self.fit.iter_mut().for_each(|f| *f = 0.0);
        for (tree, lo) in self.trees.iter().zip(&self.leaf_of) {
            for (f, &l) in self.fit.iter_mut().zip(lo) {
                *f += tree.nodes[l as usize].value;
            }
        }
    }

    fn propose(&mut self, k: usize, rng: &mut StreamRng, sigma2: f64, tau2: f64) {
        let good = self.trees[k].good_leaves();
        let nogs = self.trees[k].nogs();
        let internal = !nogs.is_empty();
        let (pg, pp, _pc) = self.moves.at(!good.is_empty(), internal);
        let u: f64 = rng.random();
        if u < pg {
            self.grow(k, rng, &good, nogs.len(), sigma2, tau2, pg);
        } else if u < pg + pp {
            self.prune(k, rng, good.len(), &nogs, sigma2, tau2, pp);
        } else if internal {
            self.change(k, rng, good.len(), &nogs, sigma2, tau2);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(&mut self, k: usize, rng: &mut StreamRng, good: &[u32], n_nog: usize, sigma2: f64, tau2: f64, pg: f64) {
        let eta = good[rng.random_range(0..good.len())];
        self.gather(k, &[eta]);
        let Some((var, cut)) = self.draw_rule(rng) else {
            return;
        };
        self.partition(var, cut);
        let sl = self.x.splittable(&self.left_obs);
        let sr = self.x.splittable(&self.right_obs);
        let node = self.trees[k].nodes[eta as usize].clone();
        let d = node.depth;

        let lprior = self.p_split(d).ln() + self.ln_no_split(d + 1, sl) + self.ln_no_split(d + 1, sr)
            - self.ln_no_split(d, true);
        let s_l = self.sum_resid(&self.left_obs);
        let s_r = self.sum_resid(&self.right_obs);
        let llik = leaf_loglik(self.left_obs.len(), s_l, sigma2, tau2)
            + leaf_loglik(self.right_obs.len(), s_r, sigma2, tau2)
            - leaf_loglik(self.scratch.len(), s_l + s_r, sigma2, tau2);

        let tree = &self.trees[k];
        let parent_was_nog = node.parent != NONE && tree.is_nog(node.parent as usize);
        let nog_after = n_nog + 1 - usize::from(parent_was_nog);
        let good_after = good.len() - 1 + usize::from(sl) + usize::from(sr);
        let (_, pp_after, _) = self.moves.at(good_after > 0, true);
        let lprop = (pp_after / nog_after as f64).ln() - (pg / good.len() as f64).ln();

        if rng.random::<f64>().ln() < lprior + llik + lprop {
            let tree = &mut self.trees[k];
            let l = tree.alloc(WNode::leaf(eta, d + 1, sl));
            let r = tree.alloc(WNode::leaf(eta, d + 1, sr));
            let n = &mut tree.nodes[eta as usize];
            n.leaf = false;
            n.var = var as u32;
            n.cut = cut;
            n.left = l;
            n.right = r;
            let lo = &mut self.leaf_of[k];
            for &i in &self.left_obs {
                lo[i as usize] = l;
            }
            for &i in &self.right_obs {
                lo[i as usize] = r;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn prune(&mut self, k: usize, rng: &mut StreamRng, n_good: usize, nogs: &[u32], sigma2: f64, tau2: f64, pp: f64) {
        let eta = nogs[rng.random_range(0..nogs.len())];
        let node = self.trees[k].nodes[eta as usize].clone();
        let (l, r) = (node.left, node.right);
        let (sl, sr) = {
            let t = &self.trees[k];
            (t.nodes[l as usize].splittable, t.nodes[r as usize].splittable)
        };
        self.gather(k, &[l, r]);
        let lo = &self.leaf_of[k];
        let (mut s_l, mut n_l, mut s_r, mut n_r) = (0.0, 0usize, 0.0, 0usize);
        for &i in &self.scratch {
            if lo[i as usize] == l {
                s_l += self.resid[i as usize];
                n_l += 1;
            } else {
                s_r += self.resid[i as usize];
                n_r += 1;
            }
        }
        let d = node.depth;
        let lprior = -(self.p_split(d).ln() + self.ln_no_split(d + 1, sl) + self.ln_no_split(d + 1, sr)
            - self.ln_no_split(d, true));
        let llik = leaf_loglik(n_l + n_r, s_l + s_r, sigma2, tau2)
            - leaf_loglik(n_l, s_l, sigma2, tau2)
            - leaf_loglik(n_r, s_r, sigma2, tau2);

        let tree = &self.trees[k];
        let sibling_leaf = node.parent != NONE && {
            let par = &tree.nodes[node.parent as usize];
            let sib = if par.left == eta { par.right } else { par.left };
            tree.nodes[sib as usize].leaf
        };
        let nog_after = nogs.len() - 1 + usize::from(sibling_leaf);
        let good_after = n_good - usize::from(sl) - usize::from(sr) + 1;
        let (pg_after, _, _) = self.moves.at(true, nog_after > 0);
        let lprop = (pg_after / good_after as f64).ln() - (pp / nogs.len() as f64).ln();

        if rng.random::<f64>().ln() < lprior + llik + lprop {
            let tree = &mut self.trees[k];
            tree.release(l);
            tree.release(r);
            let n = &mut tree.nodes[eta as usize];
            n.leaf = true;
            n.splittable = true;
            n.var = NONE;
            n.left = NONE;
            n.right = NONE;
            let lo = &mut self.leaf_of[k];
            for &i in &self.scratch {
                lo[i as usize] = eta;
            }
        }
    }

    fn change(&mut self, k: usize, rng: &mut StreamRng, n_good: usize, nogs: &[u32], sigma2: f64, tau2: f64) {
        let eta = nogs[rng.random_range(0..nogs.len())];
        let node = self.trees[k].nodes[eta as usize].clone();
        let (l, r) = (node.left, node.right);
        self.gather(k, &[l, r]);
        let Some((var, cut)) = self.draw_rule(rng) else {
            return;
        };
        let (old_sl, old_sr, s_l_old, n_l_old, s_r_old, n_r_old) = {
            let t = &self.trees[k];
            let lo = &self.leaf_of[k];
            let (mut a, mut na, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
            for &i in &self.scratch {
                if lo[i as usize] == l {
                    a += self.resid[i as usize];
                    na += 1;
                } else {
                    b += self.resid[i as usize];
                    nb += 1;
                }
            }
            (t.nodes[l as usize].splittable, t.nodes[r as usize].splittable, a, na, b, nb)
        };
        self.partition(var, cut);
        let sl = self.x.splittable(&self.left_obs);
        let sr = self.x.splittable(&self.right_obs);
        let s_l = self.sum_resid(&self.left_obs);
        let s_r = self.sum_resid(&self.right_obs);
        let d = node.depth + 1;
        let lprior = self.ln_no_split(d, sl) + self.ln_no_split(d, sr)
            - self.ln_no_split(d, old_sl)
            - self.ln_no_split(d, old_sr);
        let llik = leaf_loglik(self.left_obs.len(), s_l, sigma2, tau2)
            + leaf_loglik(self.right_obs.len(), s_r, sigma2, tau2)
            - leaf_loglik(n_l_old, s_l_old, sigma2, tau2)
            - leaf_loglik(n_r_old, s_r_old, sigma2, tau2);
        let good_after = n_good + usize::from(sl) + usize::from(sr) - usize::from(old_sl) - usize::from(old_sr);
        let (_, _, pc_before) = self.moves.at(n_good > 0, true);
        let (_, _, pc_after) = self.moves.at(good_after > 0, true);
        let lprop = pc_after.ln() - pc_before.ln();

        if rng.random::<f64>().ln() < lprior + llik + lprop {
            let tree = &mut self.trees[k];
            tree.nodes[eta as usize].var = var as u32;
            tree.nodes[eta as usize].cut = cut;
            tree.nodes[l as usize].splittable = sl;
            tree.nodes[r as usize].splittable = sr;
            let lo = &mut self.leaf_of[k];
            for &i in &self.left_obs {
                lo[i as usize] = l;
            }
            for &i in &self.right_obs {
                lo[i as usize] = r;
            }
        }
    }

    fn draw_leaves(&mut self, k: usize, rng: &mut StreamRng, sigma2: f64, tau2: f64) {
        let tree = &mut self.trees[k];
        let m = tree.nodes.len();
        let mut sums = vec![0.0; m];
        let mut counts = vec![0usize; m];
        for (i, &l) in self.leaf_of[k].iter().enumerate() {
            sums[l as usize] += self.resid[i];
            counts[l as usize] += 1;
        }
        for j in 0..m {
            if !tree.live[j] || !tree.nodes[j].leaf {
                continue;
            }
            let prec = counts[j] as f64 / sigma2 + 1.0 / tau2;
            let mean = sums[j] / sigma2 / prec;
            tree.nodes[j].value = mean + normal(rng) / prec.sqrt();
        }
    }

    fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.x.p()];
        for t in &self.trees {
            t.count_splits(&mut counts);
        }
        counts
    }

    fn snapshot(&self) -> Forest {
        let scale = self.spec.out_scale;
        Forest {
            trees: self.trees.iter().map(|t| t.compact(scale)).collect(),
            kind: self.spec.kind,
            sigma: match self.spec.kind {
                ForestKind::Continuous => self.sigma * scale,
                ForestKind::Probit => 1.0,
            },
            split_probs: self.split_probs.clone(),
            offset: self.spec.out_offset,
        }
    }
}

/// Runs burn-in plus retained iterations and returns the retained forests.
///
/// For continuous chains `target` is the outcome on the internal scale; for
/// probit chains `labels` must be given and `target` is overwritten with the
/// latent utilities minus `probit_offset`.
pub(crate) fn run_chain(
    x: &Columns,
    mut target: Vec<f64>,
    labels: Option<&[bool]>,
    probit_offset: f64,
    spec: &ChainSpec<'_>,
    rng: &mut StreamRng,
) -> Vec<Forest> {
    let cfg = spec.cfg;
    let n = x.n;
    let p = x.p();
    let all: Vec<u32> = (0..n as u32).collect();
    let root_splittable = x.splittable(&all);
    let mut st = State {
        x,
        spec,
        trees: (0..cfg.n_trees).map(|_| WTree::new(root_splittable)).collect(),
        leaf_of: vec![vec![0u32; n]; cfg.n_trees],
        fit: vec![0.0; n],
        target: Vec::new(),
        resid: vec![0.0; n],
        sigma: spec.sigma_init,
        split_probs: vec![1.0 / p as f64; p],
        dart: DartState::new(p, cfg.dart_beta_prior.a, cfg.dart_beta_prior.b),
        moves: MoveProbs {
            grow: cfg.move_probs.grow,
            prune: cfg.move_probs.prune,
            change: cfg.move_probs.change,
        },
        scratch: Vec::with_capacity(n),
        left_obs: Vec::with_capacity(n),
        right_obs: Vec::with_capacity(n),
    };
    if let Some(labels) = labels {
        for (t, &lab) in target.iter_mut().zip(labels) {
            *t = probit_latent(rng, probit_offset, lab) - probit_offset;
        }
    }
    st.target = std::mem::take(&mut target);
    if let (Some(s), ForestKind::Continuous) = (cfg.fixed_sigma, spec.kind) {
        st.sigma = s / spec.out_scale;
    }

    let total = cfg.n_burn + cfg.n_keep;
    let dart_start = cfg.n_burn / 2;
    let mut kept = Vec::with_capacity(cfg.n_keep);
    for iter in 0..total {
        st.sweep(rng);
        match spec.kind {
            ForestKind::Continuous => {
                if cfg.fixed_sigma.is_none() {
                    let ssr: f64 = st.target.iter().zip(&st.fit).map(|(y, f)| (y - f) * (y - f)).sum();
                    let df = spec.sigma_df + n as f64;
                    let s2 = (spec.sigma_df * spec.sigma_lambda + ssr) / chi_squared(rng, df);
                    st.sigma = s2.sqrt();
                }
            }
            ForestKind::Probit => {
                let labels = labels.expect("probit labels");
                for i in 0..n {
                    let z = probit_latent(rng, probit_offset + st.fit[i], labels[i]);
                    st.target[i] = z - probit_offset;
                }
            }
        }
        if cfg.dart_enabled && iter >= dart_start {
            let counts = st.split_counts();
            st.split_probs = dart::update_dart_split_probs(rng, &counts, &mut st.dart);
        }
        if iter >= cfg.n_burn {
            kept.push(st.snapshot());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_preserves_routing() {
        let mut w = WTree::new(true);
        let l = w.alloc(WNode::leaf(0, 1, true));
        let r = w.alloc(WNode::leaf(0, 1, true));
        w.nodes[0].leaf = false;
        w.nodes[0].var = 0;
        w.nodes[0].cut = 0.5;
        w.nodes[0].left = l;
        w.nodes[0].right = r;
        w.nodes[l as usize].value = -1.0;
        w.nodes[r as usize].value = 2.0;
        let t = w.compact(10.0);
        assert_eq!(t.eval(&[0.1]), -10.0);
        assert_eq!(t.eval(&[0.9]), 20.0);
        assert_eq!(t.n_leaves(), t.n_internal() + 1);
    }

    #[test]
    fn leaf_loglik_prefers_signal() {
        let flat = leaf_loglik(10, 0.0, 1.0, 0.1);
        let strong = leaf_loglik(10, 10.0, 1.0, 0.1);
        assert!(strong > flat);
    }
}
