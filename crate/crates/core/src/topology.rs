//! Tag deployments and the directed link graphs they induce.
//!
//! Links are directed because the two endpoints of a pair draw different
//! carrier power from the exciter: the tag closer to the exciter shouts
//! louder than it can hear back. Everything downstream (connectivity
//! checks, flooding, coverage statistics) works on the directed graph
//! built here.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::{Position, RfEnvironment};

/// Tag identifier; also the address byte carried in frames.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TagId(pub u8);

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tag {}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Deployment
// ---------------------------------------------------------------------------

/// Exciter position plus the tags in the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub exciter: Position,
    // BTreeMap so iteration (and thus every derived artifact) is ordered.
    tags: BTreeMap<TagId, Position>,
}

impl Deployment {
    pub fn new(exciter: Position) -> Self {
        Self {
            exciter,
            tags: BTreeMap::new(),
        }
    }

    pub fn add_tag(&mut self, id: TagId, pos: Position) -> Result<()> {
        if self.tags.contains_key(&id) {
            return Err(Error::DuplicateTag(id.0));
        }
        self.tags.insert(id, pos);
        Ok(())
    }

    pub fn from_tags(exciter: Position, tags: impl IntoIterator<Item = (TagId, Position)>) -> Result<Self> {
        let mut dep = Self::new(exciter);
        for (id, pos) in tags {
            dep.add_tag(id, pos)?;
        }
        Ok(dep)
    }

    /// Tags on the +x axis with the exciter at the origin: tag 1 at `d1`,
    /// tag k+1 a further `spacings[k-1]` out.
    pub fn line(d1: f64, spacings: &[f64]) -> Result<Self> {
        if spacings.len() + 1 > u8::MAX as usize {
            return Err(Error::Config("line supports at most 255 tags".into()));
        }
        let mut dep = Self::new(Position::new(0.0, 0.0));
        let mut x = 0.0;
        for (k, d) in std::iter::once(&d1).chain(spacings).enumerate() {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(Error::Domain(format!("spacing must be positive, got {d}")));
            }
            x += d;
            dep.add_tag(TagId(k as u8 + 1), Position::new(x, 0.0))?;
        }
        Ok(dep)
    }

    /// Uniform random placement over an `area_side` x `area_side` square,
    /// resampling any tag that lands closer than `min_spacing` to an
    /// already-placed tag or to the exciter.
    pub fn random(
        exciter: Position,
        n_tags: usize,
        area_side_m: f64,
        min_spacing_m: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_tags > u8::MAX as usize {
            return Err(Error::Config(format!(
                "at most 255 tags per deployment, asked for {n_tags}"
            )));
        }
        if !(area_side_m > 0.0 && area_side_m.is_finite()) {
            return Err(Error::Domain(format!(
                "area side must be positive, got {area_side_m}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dep = Self::new(exciter);
        let mut placed: Vec<Position> = Vec::with_capacity(n_tags);
        for k in 0..n_tags {
            let mut attempts = 0;
            let pos = loop {
                let candidate = Position::new(
                    rng.gen::<f64>() * area_side_m,
                    rng.gen::<f64>() * area_side_m,
                );
                let clear = candidate.distance(&exciter) >= min_spacing_m
                    && placed.iter().all(|p| candidate.distance(p) >= min_spacing_m);
                if clear {
                    break candidate;
                }
                attempts += 1;
                if attempts > 10_000 {
                    return Err(Error::Config(format!(
                        "cannot place {n_tags} tags with {min_spacing_m} m spacing in a {area_side_m} m square"
                    )));
                }
            };
            placed.push(pos);
            dep.add_tag(TagId(k as u8 + 1), pos)?;
        }
        Ok(dep)
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_position(&self, id: TagId) -> Result<Position> {
        self.tags.get(&id).copied().ok_or(Error::UnknownTag(id.0))
    }

    /// Tags in ascending id order.
    pub fn tags(&self) -> impl Iterator<Item = (TagId, Position)> + '_ {
        self.tags.iter().map(|(id, pos)| (*id, *pos))
    }

    pub fn tag_ids(&self) -> impl Iterator<Item = TagId> + '_ {
        self.tags.keys().copied()
    }
}

// ---------------------------------------------------------------------------
// Link graph
// ---------------------------------------------------------------------------

/// How destructive carrier interference is applied when building a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancellationMode {
    /// Power threshold only.
    Off,
    /// Phase-accurate: a link dies when its arrival-phase difference falls
    /// inside the environment's band around the cancellation angle.
    Geometric,
    /// Each otherwise-alive link is dropped independently with this
    /// probability; abstract stand-in when exact phases are not modelled.
    Bernoulli(f64),
}

/// Directed graph of detectable links, weighted by received power in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGraph {
    nodes: Vec<TagId>,
    links: BTreeMap<(TagId, TagId), f64>,
}

/// Evaluate every ordered tag pair against the power threshold, then apply
/// the cancellation mode. `seed` only matters for [`CancellationMode::Bernoulli`].
pub fn build_graph(
    env: &RfEnvironment,
    dep: &Deployment,
    mode: CancellationMode,
    seed: u64,
) -> Result<LinkGraph> {
    env.validate()?;
    if let CancellationMode::Bernoulli(p) = mode {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "cancellation probability must be in [0, 1], got {p}"
            )));
        }
    }
    let nodes: Vec<TagId> = dep.tag_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links = BTreeMap::new();
    // Ordered iteration keeps the Bernoulli draw sequence, and thus the
    // graph, a pure function of the seed.
    for (tx, tx_pos) in dep.tags() {
        for (rx, rx_pos) in dep.tags() {
            if tx == rx {
                continue;
            }
            let power = env.received_power(&dep.exciter, &tx_pos, &rx_pos)?;
            if power < env.sensitivity_w {
                continue;
            }
            let cancelled = match mode {
                CancellationMode::Off => false,
                CancellationMode::Geometric => {
                    env.link_cancelled(&dep.exciter, &tx_pos, &rx_pos, 0.0)?
                }
                CancellationMode::Bernoulli(p) => rng.gen::<f64>() < p,
            };
            if !cancelled {
                links.insert((tx, rx), power);
            }
        }
    }
    Ok(LinkGraph { nodes, links })
}

impl LinkGraph {
    /// Graph over `nodes` with explicitly given directed links. Used when
    /// link states come from somewhere other than the power model.
    pub fn from_links(
        nodes: Vec<TagId>,
        links: BTreeMap<(TagId, TagId), f64>,
    ) -> Result<Self> {
        for (tx, rx) in links.keys() {
            if !nodes.contains(tx) {
                return Err(Error::UnknownTag(tx.0));
            }
            if !nodes.contains(rx) {
                return Err(Error::UnknownTag(rx.0));
            }
            if tx == rx {
                return Err(Error::Config(format!("self-link on {tx}")));
            }
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self { nodes, links })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[TagId] {
        &self.nodes
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn has_link(&self, tx: TagId, rx: TagId) -> bool {
        self.links.contains_key(&(tx, rx))
    }

    /// Received power on a link, if the link is alive.
    pub fn link_power_w(&self, tx: TagId, rx: TagId) -> Option<f64> {
        self.links.get(&(tx, rx)).copied()
    }

    pub fn links(&self) -> impl Iterator<Item = (TagId, TagId, f64)> + '_ {
        self.links.iter().map(|((tx, rx), p)| (*tx, *rx, *p))
    }

    pub fn out_neighbors(&self, tx: TagId) -> impl Iterator<Item = TagId> + '_ {
        self.links
            .range((tx, TagId(u8::MIN))..=(tx, TagId(u8::MAX)))
            .map(|((_, rx), _)| *rx)
    }

    /// Every ordered pair communicates directly.
    pub fn is_single_hop_connected(&self) -> bool {
        let n = self.nodes.len();
        n <= 1 || self.links.len() == n * (n - 1)
    }

    /// Every ordered pair communicates, possibly through relays
    /// (strong connectivity).
    pub fn is_multi_hop_connected(&self) -> bool {
        let n = self.nodes.len();
        if n <= 1 {
            return true;
        }
        // Strongly connected iff some node reaches all nodes forwards and
        // is reached by all nodes (one BFS per direction).
        let root = self.nodes[0];
        self.reachable_from(root, false).len() == n && self.reachable_from(root, true).len() == n
    }

    /// Minimum number of links on a directed path `src -> dst`;
    /// `None` when no path exists.
    pub fn hop_count(&self, src: TagId, dst: TagId) -> Result<Option<usize>> {
        if !self.nodes.contains(&src) {
            return Err(Error::UnknownTag(src.0));
        }
        if !self.nodes.contains(&dst) {
            return Err(Error::UnknownTag(dst.0));
        }
        if src == dst {
            return Ok(Some(0));
        }
        let mut dist: BTreeMap<TagId, usize> = BTreeMap::new();
        dist.insert(src, 0);
        let mut queue = VecDeque::from([src]);
        while let Some(node) = queue.pop_front() {
            let d = dist[&node];
            for next in self.out_neighbors(node) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(next) {
                    if next == dst {
                        return Ok(Some(d + 1));
                    }
                    e.insert(d + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(None)
    }

    fn reachable_from(&self, root: TagId, reversed: bool) -> Vec<TagId> {
        let mut seen = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            for (tx, rx, _) in self.links() {
                let (from, to) = if reversed { (rx, tx) } else { (tx, rx) };
                if from == node && !seen.contains(&to) {
                    seen.push(to);
                    queue.push_back(to);
                }
            }
        }
        seen
    }
}

// ===========================================================================
// Tests
// ===========================================================================
