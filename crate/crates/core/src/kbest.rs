//! CRC-aided looped K-best tree search over the post-channel codebook.
//!
//! A path assigns one codeword index to some subset of the `V` sections
//! ("layers"). Its score is
//!
//! ```text
//! s = ||y - u||^2 - ||y||^2,   u = sum of the chosen post-channel codewords
//! ```
//!
//! and is updated recursively: appending codeword `c` adds
//! `||c||^2 + 2 Re(c'u - c'y)`. After the `V` forward layers the decoder
//! revisits layers in the order they were first decoded: each survivor
//! cancels its codeword in that layer (subtracting the same terms) and every
//! replacement index is re-scored. Revisit selection keeps only distinct
//! paths. The surviving paths are finally CRC-checked in ascending score
//! order.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::codebook::PostChannelCodebook;
use crate::crc::{CrcSpec, CRC11};
use crate::encoder::PacketLayout;
use crate::error::{Error, Result};
use crate::types::{inner_re, norm_sqr, BitString, Complex64};

/// Rule for picking which layer to expand next during the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sorting {
    /// Transmit order `0, 1, ..., V-1`.
    Sequential,
    /// One layer for all survivors: the remaining layer whose best child of
    /// the current best survivor has the smallest score.
    #[default]
    PerLayer,
    /// The same rule evaluated independently for each survivor.
    PerBranch,
}

impl fmt::Display for Sorting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sorting::Sequential => "sequential",
            Sorting::PerLayer => "per_layer",
            Sorting::PerBranch => "per_branch",
        })
    }
}

impl FromStr for Sorting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sequential" => Ok(Sorting::Sequential),
            "per_layer" => Ok(Sorting::PerLayer),
            "per_branch" => Ok(Sorting::PerBranch),
            other => Err(Error::Config(format!("unknown sorting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Survivors kept per layer.
    pub k: usize,
    /// Extra (revisited) layers after the forward pass.
    pub iter: usize,
    pub sorting: Sorting,
    pub crc: CrcSpec,
}

impl DecodeConfig {
    pub fn new(k: usize, iter: usize, sorting: Sorting) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        Ok(Self { k, iter, sorting, crc: CRC11 })
    }
}

/// A partial path in the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Survivor {
    /// Codeword index per layer in transmit order; `None` if not yet decoded.
    pub assignment: Vec<Option<usize>>,
    /// Layers in the order they were (re)visited, including revisits.
    pub order: Vec<usize>,
    /// Sum of the chosen post-channel codewords.
    pub u: Vec<Complex64>,
    pub score: f64,
}

impl Survivor {
    pub fn root(sections: usize, word_len: usize) -> Self {
        Self { assignment: vec![None; sections], order: Vec::new(), u: vec![Complex64::new(0.0, 0.0); word_len], score: 0.0 }
    }

    /// Decoded indices in decoding order (first visit of each layer).
    pub fn indices_in_decode_order(&self) -> Vec<usize> {
        self.order.iter().take(self.assignment.len()).filter_map(|&l| self.assignment[l]).collect()
    }

    fn remaining(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().enumerate().filter(|(_, a)| a.is_none()).map(|(l, _)| l)
    }

    fn value_with(&self, layer: usize, index: usize, at: usize) -> Option<usize> {
        if at == layer {
            Some(index)
        } else {
            self.assignment[at]
        }
    }
}

/// One child of a survivor: `parent` extended (or revised) with `index` in `layer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub score: f64,
    pub parent: usize,
    pub layer: usize,
    pub index: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.score.total_cmp(&b.score).then(a.parent.cmp(&b.parent)).then(a.index.cmp(&b.index)).then(a.layer.cmp(&b.layer))
}

fn path_key(c: &Candidate, parents: &[Survivor]) -> Vec<Option<usize>> {
    let p = &parents[c.parent];
    (0..p.assignment.len()).map(|l| p.value_with(c.layer, c.index, l)).collect()
}

/// Keeps the `k` smallest-score candidates, ties broken by (parent rank, child
/// index). In distinct mode, candidates whose full index tuple (in transmit
/// order) equals an already selected one are skipped. Fewer than `k` are
/// returned when there are not enough (distinct) candidates.
pub fn select_top_k(mut cands: Vec<Candidate>, k: usize, distinct: bool, parents: &[Survivor]) -> Vec<Candidate> {
    if !distinct {
        if cands.len() > k {
            cands.select_nth_unstable_by(k - 1, candidate_order);
            cands.truncate(k);
        }
        cands.sort_unstable_by(candidate_order);
        return cands;
    }
    cands.sort_unstable_by(candidate_order);
    let mut seen = HashSet::with_capacity(k);
    let mut out: Vec<Candidate> = Vec::with_capacity(k);
    for c in cands {
        if out.len() == k {
            break;
        }
        if seen.insert(path_key(&c, parents)) {
            out.push(c);
        }
    }
    out
}

/// Which layer(s) to expand next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerChoice {
    /// Same layer for every survivor.
    All(usize),
    /// One layer per survivor, in survivor order.
    PerSurvivor(Vec<usize>),
}

/// Decoder work counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Forward plus revisited layers.
    pub layers: usize,
    /// Child score evaluations used for expansion.
    pub child_metric_evals: u64,
    /// Extra child score evaluations spent choosing the decoding order.
    pub ordering_metric_evals: u64,
    /// Candidates passed through the CRC check.
    pub crc_checks: usize,
}

impl DecodeStats {
    pub fn total_metric_evals(&self) -> u64 {
        self.child_metric_evals + self.ordering_metric_evals
    }
}

/// A final path in transmit order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub indices: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Information bits of the best CRC-passing candidate (of the best
    /// candidate when the layout has no CRC).
    pub bits: Option<BitString>,
    pub crc_pass: bool,
    /// Final survivors, ascending score.
    pub candidates: Vec<RankedCandidate>,
    pub stats: DecodeStats,
}

impl DecodeResult {
    /// Information bits of the lowest-score candidate regardless of CRC.
    pub fn best_guess_bits(&self, layout: &PacketLayout) -> Option<Vec<u8>> {
        self.candidates.first().map(|c| {
            let mut frame = layout.indices_to_frame(&c.indices);
            frame.truncate(layout.info_bits);
            frame
        })
    }

    /// Whether `indices` (transmit order) is among the final candidates.
    pub fn contains(&self, indices: &[usize]) -> bool {
        self.candidates.iter().any(|c| c.indices == indices)
    }
}

/// Returned by [`decode_stats`].
pub fn decode_stats(result: &DecodeResult) -> DecodeStats {
    result.stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Loop,
}

/// Snapshot handed to a trace observer after every layer.
#[derive(Debug)]
pub struct LayerTrace<'a> {
    pub phase: Phase,
    /// Step within the phase, from 0.
    pub step: usize,
    /// Layer expanded by each new survivor.
    pub layers: Vec<usize>,
    /// Cancel metrics of the parents (loop phase only).
    pub cancel_scores: Option<&'a [f64]>,
    pub survivors: &'a [Survivor],
}

/// Per-received-vector metric tables: `||c||^2` and `Re(c'y)` for every codeword.
pub struct KBest<'a> {
    pccb: &'a PostChannelCodebook,
    energy: Vec<f64>,
    corr_y: Vec<f64>,
}

impl<'a> KBest<'a> {
    pub fn new(pccb: &'a PostChannelCodebook, y: &[Complex64]) -> Result<Self> {
        if y.len() != pccb.word_len() {
            return Err(Error::Dimension(format!("received vector has {} samples, codebook words have {}", y.len(), pccb.word_len())));
        }
        let (nv, nm) = (pccb.sections(), pccb.alphabet());
        let mut energy = Vec::with_capacity(nv * nm);
        let mut corr_y = Vec::with_capacity(nv * nm);
        for v in 0..nv {
            for m in 0..nm {
                let c = pccb.word(v, m);
                energy.push(norm_sqr(c));
                corr_y.push(inner_re(c, y));
            }
        }
        Ok(Self { pccb, energy, corr_y })
    }

    /// `score + ||c_m||^2 + 2 Re(c_m'u - c_m'y)` for every index `m` of `layer`.
    pub fn child_scores_into(&self, score: f64, u: &[Complex64], layer: usize, out: &mut Vec<f64>) {
        let nm = self.pccb.alphabet();
        let n = self.pccb.word_len();
        let base = layer * nm;
        out.clear();
        out.extend(
            self.pccb
                .section(layer)
                .chunks_exact(n)
                .enumerate()
                .map(|(m, c)| score + self.energy[base + m] + 2.0 * (inner_re(c, u) - self.corr_y[base + m])),
        );
    }

    pub fn child_scores(&self, parent: &Survivor, layer: usize) -> Vec<f64> {
        let mut out = Vec::new();
        self.child_scores_into(parent.score, &parent.u, layer, &mut out);
        out
    }

    /// Score of `parent` with its codeword in `layer` removed, and the reduced accumulator.
    pub fn cancel(&self, parent: &Survivor, layer: usize) -> (f64, Vec<Complex64>) {
        let old = parent.assignment[layer].expect("revisited layer must be decoded");
        let c = self.pccb.word(layer, old);
        let u: Vec<Complex64> = parent.u.iter().zip(c).map(|(a, b)| a - b).collect();
        let k = layer * self.pccb.alphabet() + old;
        let t = parent.score + 2.0 * (self.corr_y[k] - inner_re(c, &u)) - self.energy[k];
        (t, u)
    }

    fn best_layer(&self, parent: &Survivor, scratch: &mut Vec<f64>) -> (usize, u64) {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut evals = 0u64;
        for l in parent.remaining() {
            self.child_scores_into(parent.score, &parent.u, l, scratch);
            evals += scratch.len() as u64;
            let min = scratch.iter().copied().fold(f64::INFINITY, f64::min);
            if min < best.1 || best.0 == usize::MAX {
                best = (l, min);
            }
        }
        (best.0, evals)
    }

    /// Next layer(s) to expand; `survivors` must be sorted by ascending score
    /// and share the same remaining layers unless sorting is per-branch.
    pub fn choose_next_layer(&self, survivors: &[Survivor], sorting: Sorting) -> LayerChoice {
        self.choose_counted(survivors, sorting).0
    }

    fn choose_counted(&self, survivors: &[Survivor], sorting: Sorting) -> (LayerChoice, u64) {
        let mut scratch = Vec::new();
        match sorting {
            Sorting::Sequential => (LayerChoice::All(survivors[0].remaining().next().expect("a remaining layer")), 0),
            Sorting::PerLayer => {
                let (l, evals) = self.best_layer(&survivors[0], &mut scratch);
                (LayerChoice::All(l), evals)
            }
            Sorting::PerBranch => {
                let mut total = 0;
                let layers = survivors
                    .iter()
                    .map(|s| {
                        let (l, evals) = self.best_layer(s, &mut scratch);
                        total += evals;
                        l
                    })
                    .collect();
                (LayerChoice::PerSurvivor(layers), total)
            }
        }
    }

    pub fn decode(&self, cfg: &DecodeConfig, layout: &PacketLayout) -> Result<DecodeResult> {
        self.decode_traced(cfg, layout, |_| {})
    }

    /// Full decode, calling `observe` after every forward and loop layer.
    pub fn decode_traced(&self, cfg: &DecodeConfig, layout: &PacketLayout, mut observe: impl FnMut(&LayerTrace)) -> Result<DecodeResult> {
        let nv = self.pccb.sections();
        let nm = self.pccb.alphabet();
        if layout.sections != nv || layout.alphabet() != nm {
            return Err(Error::Dimension(format!(
                "layout (V={}, M={}) does not match codebook (V={nv}, M={nm})",
                layout.sections,
                layout.alphabet()
            )));
        }
        if cfg.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let mut stats = DecodeStats::default();
        let mut survivors = vec![Survivor::root(nv, self.pccb.word_len())];
        let mut scores = Vec::with_capacity(nm);

        for step in 0..nv {
            let (choice, ordering) = self.choose_counted(&survivors, cfg.sorting);
            stats.ordering_metric_evals += ordering;
            let layer_of = |k: usize| match &choice {
                LayerChoice::All(l) => *l,
                LayerChoice::PerSurvivor(ls) => ls[k],
            };
            let mut cands = Vec::with_capacity(survivors.len() * nm);
            for (k, s) in survivors.iter().enumerate() {
                let layer = layer_of(k);
                self.child_scores_into(s.score, &s.u, layer, &mut scores);
                stats.child_metric_evals += nm as u64;
                cands.extend(scores.iter().enumerate().map(|(index, &score)| Candidate { score, parent: k, layer, index }));
            }
            // with a shared order, children of distinct parents are distinct paths;
            // per-branch orders can reach the same index set along different routes
            let distinct = cfg.sorting == Sorting::PerBranch;
            let chosen = select_top_k(cands, cfg.k, distinct, &survivors);
            survivors = self.extend(&survivors, &chosen, |k| survivors[k].u.clone());
            stats.layers += 1;
            observe(&LayerTrace {
                phase: Phase::Forward,
                step,
                layers: chosen.iter().map(|c| c.layer).collect(),
                cancel_scores: None,
                survivors: &survivors,
            });
        }

        for step in 0..cfg.iter {
            let reduced: Vec<(f64, Vec<Complex64>)> = survivors.iter().map(|s| self.cancel(s, s.order[step])).collect();
            let mut cands = Vec::with_capacity(survivors.len() * nm);
            for (k, (s, (t, u))) in survivors.iter().zip(&reduced).enumerate() {
                let layer = s.order[step];
                self.child_scores_into(*t, u, layer, &mut scores);
                stats.child_metric_evals += nm as u64;
                cands.extend(scores.iter().enumerate().map(|(index, &score)| Candidate { score, parent: k, layer, index }));
            }
            let chosen = select_top_k(cands, cfg.k, true, &survivors);
            let cancel: Vec<f64> = reduced.iter().map(|(t, _)| *t).collect();
            survivors = self.extend(&survivors, &chosen, |k| reduced[k].1.clone());
            stats.layers += 1;
            observe(&LayerTrace {
                phase: Phase::Loop,
                step,
                layers: chosen.iter().map(|c| c.layer).collect(),
                cancel_scores: Some(&cancel),
                survivors: &survivors,
            });
        }

        let candidates: Vec<RankedCandidate> = survivors
            .iter()
            .map(|s| RankedCandidate { indices: s.assignment.iter().map(|a| a.expect("all layers decoded")).collect(), score: s.score })
            .collect();
        if layout.crc_bits != 0 && layout.crc_bits != cfg.crc.degree() {
            return Err(Error::Config(format!("layout has {} CRC bits, decoder checks {}", layout.crc_bits, cfg.crc.degree())));
        }
        let mut bits = None;
        for c in &candidates {
            if layout.crc_bits == 0 {
                bits = Some(BitString::new(layout.indices_to_frame(&c.indices))?);
                break;
            }
            stats.crc_checks += 1;
            let frame = layout.indices_to_frame(&c.indices);
            if cfg.crc.check(&frame)? {
                bits = Some(BitString::new(frame[..layout.info_bits].to_vec())?);
                break;
            }
        }
        Ok(DecodeResult { crc_pass: bits.is_some(), bits, candidates, stats })
    }

    /// New survivors from selected candidates; `base(k)` is the accumulator
    /// parent `k`'s children were scored against.
    fn extend(&self, parents: &[Survivor], chosen: &[Candidate], base: impl Fn(usize) -> Vec<Complex64>) -> Vec<Survivor> {
        chosen
            .iter()
            .map(|c| {
                let p = &parents[c.parent];
                let mut u = base(c.parent);
                for (a, w) in u.iter_mut().zip(self.pccb.word(c.layer, c.index)) {
                    *a += w;
                }
                let mut assignment = p.assignment.clone();
                assignment[c.layer] = Some(c.index);
                let mut order = p.order.clone();
                order.push(c.layer);
                Survivor { assignment, order, u, score: c.score }
            })
            .collect()
    }
}

/// Scores of all `M` children of `parent` in `layer`.
pub fn child_scores(parent: &Survivor, layer: usize, pccb: &PostChannelCodebook, y: &[Complex64]) -> Result<Vec<f64>> {
    if parent.assignment.get(layer).copied().flatten().is_some() {
        return Err(Error::Config(format!("layer {layer} is already on the path")));
    }
    Ok(KBest::new(pccb, y)?.child_scores(parent, layer))
}

pub fn choose_next_layer(survivors: &[Survivor], pccb: &PostChannelCodebook, y: &[Complex64], sorting: Sorting) -> Result<LayerChoice> {
    if survivors.is_empty() || survivors.iter().any(|s| s.remaining().next().is_none()) {
        return Err(Error::Config("every survivor needs a remaining layer".into()));
    }
    Ok(KBest::new(pccb, y)?.choose_next_layer(survivors, sorting))
}

/// Looped K-best decode of the vectorized received block `y`.
pub fn kbest_decode(y: &[Complex64], pccb: &PostChannelCodebook, cfg: &DecodeConfig, layout: &PacketLayout) -> Result<DecodeResult> {
    KBest::new(pccb, y)?.decode(cfg, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit, ChannelRealization, SnrPoint};
    use crate::codebook::{apply_channel_to_codebook, Codebook};
    use crate::encoder::{encode, reshape_space_time, superimpose};
    use crate::types::{ComplexMat, SeededRng};

    fn root_for(pccb: &PostChannelCodebook) -> Survivor {
        Survivor::root(pccb.sections(), pccb.word_len())
    }

    fn direct_distance(y: &[Complex64], u: &[Complex64]) -> f64 {
        y.iter().zip(u).map(|(a, b)| (a - b).norm_sqr()).sum()
    }

    fn identity_pccb(cb: &Codebook) -> PostChannelCodebook {
        let ch = ChannelRealization::new(ComplexMat::identity(1, 1));
        apply_channel_to_codebook(cb, &ch, 1, cb.complex_len()).unwrap()
    }

    #[test]
    fn root_children_pick_the_transmitted_word() {
        let cb = Codebook::random_gaussian(2, 32, 8, &mut SeededRng::new(1)).unwrap();
        let pccb = identity_pccb(&cb);
        for m_star in 0..8 {
            let y = pccb.word(1, m_star).to_vec();
            let scores = child_scores(&root_for(&pccb), 1, &pccb, &y).unwrap();
            let best = (0..8).min_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            assert_eq!(best, m_star);
        }
    }

    #[test]
    fn child_scores_match_direct_distance() {
        let mut rng = SeededRng::new(2);
        let cb = Codebook::random_gaussian(3, 16, 8, &mut rng).unwrap();
        let ch = ChannelRealization::draw(2, 2, &mut rng);
        let pccb = apply_channel_to_codebook(&cb, &ch, 2, 4).unwrap();
        let y: Vec<Complex64> = (0..pccb.word_len()).map(|_| rng.complex_normal(3.0)).collect();
        let kb = KBest::new(&pccb, &y).unwrap();
        // parent with layer 0 = 5
        let root = root_for(&pccb);
        let s0 = kb.child_scores(&root, 0)[5];
        let mut parent = root.clone();
        parent.assignment[0] = Some(5);
        parent.order.push(0);
        parent.u = pccb.word(0, 5).to_vec();
        parent.score = s0;
        let ynorm = norm_sqr(&y);
        for (m, s) in kb.child_scores(&parent, 2).into_iter().enumerate() {
            let u: Vec<Complex64> = parent.u.iter().zip(pccb.word(2, m)).map(|(a, b)| a + b).collect();
            let d = direct_distance(&y, &u);
            assert!(((s + ynorm) - d).abs() / ynorm < 1e-9);
        }
        assert!(child_scores(&parent, 0, &pccb, &y).is_err());
    }

    #[test]
    fn top_k_basic() {
        let parents = vec![Survivor::root(2, 1)];
        let cands = [3.0, 1.0, 2.0].iter().enumerate().map(|(i, &s)| Candidate { score: s, parent: 0, layer: 0, index: i }).collect();
        let top = select_top_k(cands, 2, false, &parents);
        assert_eq!(top.iter().map(|c| c.score).collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(top.iter().map(|c| c.index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn top_k_ties_break_by_parent_then_index() {
        let parents = vec![Survivor::root(2, 1), Survivor::root(2, 1)];
        let cands = vec![
            Candidate { score: 1.0, parent: 1, layer: 0, index: 0 },
            Candidate { score: 1.0, parent: 0, layer: 0, index: 3 },
            Candidate { score: 1.0, parent: 0, layer: 0, index: 2 },
        ];
        let top = select_top_k(cands, 3, false, &parents);
        assert_eq!(top.iter().map(|c| (c.parent, c.index)).collect::<Vec<_>>(), vec![(0, 2), (0, 3), (1, 0)]);
    }

    #[test]
    fn distinct_mode_drops_duplicate_paths() {
        let mut a = Survivor::root(2, 1);
        a.assignment[0] = Some(1);
        let mut b = Survivor::root(2, 1);
        b.assignment[1] = Some(2);
        let parents = vec![a, b];
        // a + (layer 1 = 2) and b + (layer 0 = 1) are the same path
        let cands = vec![
            Candidate { score: 0.5, parent: 0, layer: 1, index: 2 },
            Candidate { score: 0.5, parent: 1, layer: 0, index: 1 },
            Candidate { score: 0.7, parent: 1, layer: 0, index: 3 },
        ];
        let top = select_top_k(cands.clone(), 2, true, &parents);
        assert_eq!(top.len(), 2);
        assert_eq!((top[0].parent, top[1].parent, top[1].index), (0, 1, 3));
        let top = select_top_k(cands, 2, false, &parents);
        assert_eq!((top[0].parent, top[1].parent), (0, 1));
    }

    #[test]
    fn first_layer_keeps_at_most_m() {
        let mut rng = SeededRng::new(3);
        let cb = Codebook::random_gaussian(3, 16, 4, &mut rng).unwrap();
        let pccb = identity_pccb(&cb);
        let y: Vec<Complex64> = (0..8).map(|_| rng.complex_normal(1.0)).collect();
        let kb = KBest::new(&pccb, &y).unwrap();
        let layout = PacketLayout::uncoded(3, 4).unwrap();
        let cfg = DecodeConfig::new(16, 0, Sorting::Sequential).unwrap();
        let mut sizes = Vec::new();
        kb.decode_traced(&cfg, &layout, |t| sizes.push(t.survivors.len())).unwrap();
        assert_eq!(sizes, vec![4, 16, 16]);
    }

    #[test]
    fn one_remaining_layer_is_chosen() {
        let mut rng = SeededRng::new(4);
        let cb = Codebook::random_gaussian(2, 16, 4, &mut rng).unwrap();
        let pccb = identity_pccb(&cb);
        let y: Vec<Complex64> = (0..8).map(|_| rng.complex_normal(1.0)).collect();
        let mut s = root_for(&pccb);
        s.assignment[0] = Some(1);
        s.u = pccb.word(0, 1).to_vec();
        for sorting in [Sorting::Sequential, Sorting::PerLayer] {
            assert_eq!(choose_next_layer(&[s.clone()], &pccb, &y, sorting).unwrap(), LayerChoice::All(1));
        }
        assert_eq!(choose_next_layer(&[s.clone()], &pccb, &y, Sorting::PerBranch).unwrap(), LayerChoice::PerSurvivor(vec![1]));
    }

    #[test]
    fn per_layer_prefers_the_more_reliable_layer() {
        // V=2, D/2=2: layer 1 is strong (energy on the axis the signal lives on)
        let e = 1.0; // D/2V with D=4, V=2
        let cb = Codebook::from_fn(2, 4, 2, |v, m| {
            let s = if m == 0 { 1.0 } else { -1.0 };
            let mut w = vec![Complex64::new(0.0, 0.0); 2];
            w[v] = Complex64::new(s * e, 0.0);
            w
        })
        .unwrap();
        let pccb = identity_pccb(&cb);
        // weak evidence for layer 0, strong for layer 1
        let y = vec![Complex64::new(0.1, 0.0), Complex64::new(2.0, 0.0)];
        let root = root_for(&pccb);
        let kb = KBest::new(&pccb, &y).unwrap();
        let min0 = kb.child_scores(&root, 0).into_iter().fold(f64::INFINITY, f64::min);
        let min1 = kb.child_scores(&root, 1).into_iter().fold(f64::INFINITY, f64::min);
        // root scores: 1 - 2*0.1 = 0.8 vs 1 - 2*2 = -3
        assert!((min0 - 0.8).abs() < 1e-12 && (min1 + 3.0).abs() < 1e-12);
        assert_eq!(choose_next_layer(std::slice::from_ref(&root), &pccb, &y, Sorting::PerLayer).unwrap(), LayerChoice::All(1));
        assert_eq!(choose_next_layer(&[root], &pccb, &y, Sorting::Sequential).unwrap(), LayerChoice::All(0));
    }

    #[test]
    fn noiseless_k1_sequential_recovers_message() {
        let mut rng = SeededRng::new(5);
        let cb = Codebook::random_gaussian(3, 64, 16, &mut rng).unwrap();
        let layout = PacketLayout::for_codebook(&cb).unwrap();
        let cfg = DecodeConfig::new(1, 0, Sorting::Sequential).unwrap();
        for _ in 0..20 {
            let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
            let enc = encode(&msg, &cb, &layout).unwrap();
            let pccb = identity_pccb(&cb);
            let res = kbest_decode(enc.signal.as_slice(), &pccb, &cfg, &layout).unwrap();
            assert!(res.crc_pass);
            assert_eq!(res.bits.as_ref(), Some(&msg));
            assert_eq!(res.candidates[0].indices, enc.indices);
        }
    }

    #[test]
    fn revisiting_the_same_index_keeps_scores() {
        let mut rng = SeededRng::new(6);
        let cb = Codebook::random_gaussian(3, 32, 8, &mut rng).unwrap();
        let ch = ChannelRealization::draw(2, 2, &mut rng);
        let pccb = apply_channel_to_codebook(&cb, &ch, 2, 8).unwrap();
        let y: Vec<Complex64> = (0..pccb.word_len()).map(|_| rng.complex_normal(2.0)).collect();
        let kb = KBest::new(&pccb, &y).unwrap();
        let layout = PacketLayout::uncoded(3, 8).unwrap();
        let cfg = DecodeConfig::new(4, 0, Sorting::PerLayer).unwrap();
        let mut last = Vec::new();
        kb.decode_traced(&cfg, &layout, |t| last = t.survivors.to_vec()).unwrap();
        for s in &last {
            let layer = s.order[0];
            let (t, u) = kb.cancel(s, layer);
            let mut scores = Vec::new();
            kb.child_scores_into(t, &u, layer, &mut scores);
            let again = scores[s.assignment[layer].unwrap()];
            assert!((again - s.score).abs() <= 1e-9 * norm_sqr(&y));
        }
    }

    #[test]
    fn metric_eval_counts() {
        let mut rng = SeededRng::new(7);
        let cb = Codebook::random_gaussian(4, 64, 256, &mut rng).unwrap();
        let layout = PacketLayout::for_codebook(&cb).unwrap();
        let ch = ChannelRealization::draw(4, 4, &mut rng);
        let pccb = apply_channel_to_codebook(&cb, &ch, 4, 8).unwrap();
        let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
        let s = reshape_space_time(encode(&msg, &cb, &layout).unwrap().signal.as_slice(), 4, 8).unwrap();
        let y = transmit(&s, &ch, SnrPoint::from_db(6.0), &mut rng).unwrap();

        let res = kbest_decode(y.as_slice(), &pccb, &DecodeConfig::new(16, 4, Sorting::PerLayer).unwrap(), &layout).unwrap();
        assert_eq!(res.stats.layers, 8);
        // first layer has a single (root) parent
        assert_eq!(res.stats.child_metric_evals, 256 + 7 * 16 * 256);
        assert!(res.stats.child_metric_evals <= 8 * 16 * 256);
        assert_eq!(decode_stats(&res), res.stats);

        let res = kbest_decode(y.as_slice(), &pccb, &DecodeConfig::new(16, 0, Sorting::Sequential).unwrap(), &layout).unwrap();
        assert_eq!(res.stats.layers, 4);
        assert_eq!(res.stats.ordering_metric_evals, 0);

        let res = kbest_decode(y.as_slice(), &pccb, &DecodeConfig::new(1, 4, Sorting::PerLayer).unwrap(), &layout).unwrap();
        assert!(res.stats.child_metric_evals <= 8 * 256);
    }

    #[test]
    fn candidates_sorted_and_crc_pick_is_lowest_passing() {
        let mut rng = SeededRng::new(8);
        let cb = Codebook::random_gaussian(4, 32, 16, &mut rng).unwrap();
        let layout = PacketLayout::for_codebook(&cb).unwrap();
        for _ in 0..200 {
            let ch = ChannelRealization::draw(2, 2, &mut rng);
            let pccb = apply_channel_to_codebook(&cb, &ch, 2, 8).unwrap();
            let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
            let s = reshape_space_time(encode(&msg, &cb, &layout).unwrap().signal.as_slice(), 2, 8).unwrap();
            let y = transmit(&s, &ch, SnrPoint::from_db(2.0), &mut rng).unwrap();
            let res = kbest_decode(y.as_slice(), &pccb, &DecodeConfig::new(8, 4, Sorting::PerBranch).unwrap(), &layout).unwrap();
            assert!(res.candidates.windows(2).all(|w| w[0].score <= w[1].score));
            let passing: Vec<&RankedCandidate> =
                res.candidates.iter().filter(|c| CRC11.check(&layout.indices_to_frame(&c.indices)).unwrap()).collect();
            assert_eq!(res.crc_pass, !passing.is_empty());
            if let Some(first) = passing.first() {
                let mut expected = layout.indices_to_frame(&first.indices);
                expected.truncate(layout.info_bits);
                assert_eq!(res.bits.as_ref().unwrap().as_slice(), expected.as_slice());
            } else {
                assert!(res.bits.is_none());
            }
            // distinct final paths
            for (i, a) in res.candidates.iter().enumerate() {
                for b in &res.candidates[i + 1..] {
                    assert_ne!(a.indices, b.indices);
                }
            }
        }
    }

    #[test]
    fn exhaustive_k_matches_brute_force() {
        let mut rng = SeededRng::new(9);
        let cb = Codebook::random_gaussian(2, 16, 8, &mut rng).unwrap();
        let layout = PacketLayout::uncoded(2, 8).unwrap();
        for _ in 0..100 {
            let ch = ChannelRealization::draw(2, 2, &mut rng);
            let pccb = apply_channel_to_codebook(&cb, &ch, 2, 4).unwrap();
            let y: Vec<Complex64> = (0..pccb.word_len()).map(|_| rng.complex_normal(4.0)).collect();
            let res = kbest_decode(&y, &pccb, &DecodeConfig::new(8, 0, Sorting::PerLayer).unwrap(), &layout).unwrap();
            let mut best = (f64::INFINITY, vec![]);
            for a in 0..8 {
                for b in 0..8 {
                    let u: Vec<Complex64> = pccb.word(0, a).iter().zip(pccb.word(1, b)).map(|(x, z)| x + z).collect();
                    let d = direct_distance(&y, &u);
                    if d < best.0 {
                        best = (d, vec![a, b]);
                    }
                }
            }
            assert_eq!(res.candidates[0].indices, best.1);
            let _ = superimpose(&cb, &best.1);
        }
    }

    #[test]
    fn sorting_parses() {
        for s in [Sorting::Sequential, Sorting::PerLayer, Sorting::PerBranch] {
            assert_eq!(s.to_string().parse::<Sorting>().unwrap(), s);
        }
        assert_eq!("per-branch".parse::<Sorting>().unwrap(), Sorting::PerBranch);
        assert!("random".parse::<Sorting>().is_err());
        assert!(DecodeConfig::new(0, 0, Sorting::PerLayer).is_err());
    }
}
