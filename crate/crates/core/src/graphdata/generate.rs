use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, MotifKind};
use crate::error::{Error, Result};

/// Barabási–Albert preferential attachment: a clique on the first `m + 1`
/// nodes, then every new node links to `m` distinct existing nodes chosen
/// with probability proportional to their degree.
pub fn generate_ba<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    if m < 1 || n <= m {
        return Err(Error::Param(format!("BA graph needs n > m >= 1, got n={n}, m={m}")));
    }
    let mut edges = Vec::new();
    // node ids repeated once per incident edge endpoint
    let mut endpoints = Vec::new();
    for i in 0..=m {
        for j in i + 1..=m {
            edges.push([i, j]);
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in m + 1..n {
        chosen.clear();
        while chosen.len() < m {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            edges.push([t, v]);
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    Graph::unfeatured(n, &edges, 0)
}

/// Erdős–Rényi graph; disconnected results are joined into one component by
/// a chain of random edges between consecutive components.
pub fn generate_er<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Param(format!("ER edge probability must be in (0, 1], got {p}")));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push([i, j]);
            }
        }
    }
    let comps = components(n, &edges);
    for pair in comps.windows(2) {
        let a = pair[0][rng.gen_range(0..pair[0].len())];
        let b = pair[1][rng.gen_range(0..pair[1].len())];
        edges.push([a, b]);
    }
    Graph::unfeatured(n, &edges, 0)
}

/// Connected components, each sorted, ordered by smallest member.
fn components(n: usize, edges: &[[usize; 2]]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &[a, b] in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(v);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colour {
    Blue,
    Green,
    Red,
}

impl Colour {
    pub const ALL: [Colour; 3] = [Colour::Blue, Colour::Green, Colour::Red];

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[self as usize] = 1.0;
        v
    }

    pub fn from_features(row: &[f64]) -> Option<Colour> {
        if row.len() != 3 {
            return None;
        }
        Colour::ALL.into_iter().find(|&c| row[c as usize] == 1.0)
    }

    fn random<R: Rng>(rng: &mut R) -> Colour {
        Colour::ALL[rng.gen_range(0..3)]
    }
}

/// Template subgraphs that can be attached to a base graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motif {
    Grid3x3,
    House,
    Star(usize),
    ColouredHouse(Colour),
}

impl Motif {
    /// `(node count, internal edges)`.
    pub fn template(self) -> (usize, Vec<[usize; 2]>) {
        match self {
            Motif::Grid3x3 => {
                let mut e = Vec::new();
                for r in 0..3 {
                    for c in 0..3 {
                        let v = r * 3 + c;
                        if c < 2 {
                            e.push([v, v + 1]);
                        }
                        if r < 2 {
                            e.push([v, v + 3]);
                        }
                    }
                }
                (9, e)
            }
            // 4-cycle 0-1-2-3 with roof apex 4 joined to the adjacent pair 0, 1
            Motif::House | Motif::ColouredHouse(_) => (5, vec![[0, 1], [1, 2], [2, 3], [3, 0], [0, 4], [1, 4]]),
            Motif::Star(leaves) => (leaves + 1, (1..=leaves).map(|l| [0, l]).collect()),
        }
    }

    pub fn kind(self) -> MotifKind {
        match self {
            Motif::Grid3x3 => MotifKind::Grid,
            Motif::House => MotifKind::House,
            Motif::Star(_) => MotifKind::Star,
            Motif::ColouredHouse(_) => MotifKind::ColouredHouse,
        }
    }
}

/// Appends `motif` to `base` and joins it with one bridge edge between a
/// uniformly random motif node and a uniformly random base node.
///
/// New nodes get the constant feature 1.0 on featureless graphs. On
/// three-colour graphs a coloured house is painted uniformly, while a plain
/// house gets random per-node colours, redrawn if they come out uniformly
/// blue or green so that only the decision house carries a uniform colour.
pub fn attach_motif<R: Rng>(base: &Graph, motif: Motif, rng: &mut R) -> Result<Graph> {
    if base.n == 0 {
        return Err(Error::Param("cannot attach a motif to an empty graph".into()));
    }
    if let Motif::Star(0) = motif {
        return Err(Error::Param("star motif needs at least one leaf".into()));
    }
    let (size, internal) = motif.template();
    let offset = base.n;
    let mut edges = base.edges.clone();
    edges.extend(internal.iter().map(|&[a, b]| [a + offset, b + offset]));
    let anchor = rng.gen_range(0..size) + offset;
    let target = rng.gen_range(0..base.n);
    edges.push([target, anchor]);

    let mut features = base.features.clone();
    let coloured = base.feature_dim() == 3;
    match motif {
        Motif::ColouredHouse(c) => features.extend((0..size).map(|_| c.one_hot())),
        Motif::House if coloured => loop {
            let colours: Vec<Colour> = (0..size).map(|_| Colour::random(rng)).collect();
            let uniform = colours.iter().all(|&c| c == colours[0]);
            if !(uniform && colours[0] != Colour::Red) {
                features.extend(colours.iter().map(|c| c.one_hot()));
                break;
            }
        },
        _ => {
            let row = vec![1.0; base.feature_dim().max(1)];
            features.extend((0..size).map(|_| row.clone()));
        }
    }

    let mut out = Graph::new(base.n + size, &edges, features, base.label)?;
    let mut mask = base.motif_mask.clone().unwrap_or_else(|| vec![0; base.n]);
    let mut motifs = base.motifs.clone();
    motifs.push(motif.kind());
    mask.extend(std::iter::repeat_n(motifs.len() as u32, size));
    out.motif_mask = Some(mask);
    out.motifs = motifs;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Grid,
    GridHouse,
    Stars,
    HouseColour,
}

impl DatasetName {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "grid" => Ok(Self::Grid),
            "grid_house" => Ok(Self::GridHouse),
            "stars" => Ok(Self::Stars),
            "house_colour" | "house_color" => Ok(Self::HouseColour),
            other => Err(Error::Param(format!("unknown dataset '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::GridHouse => "grid_house",
            Self::Stars => "stars",
            Self::HouseColour => "house_colour",
        }
    }
}

/// Random base-graph family with an inclusive node-count range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BaseGraph {
    Ba {
        m: usize,
        min_nodes: usize,
        max_nodes: usize,
    },
    Er {
        p: f64,
        min_nodes: usize,
        max_nodes: usize,
    },
}

impl BaseGraph {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<Graph> {
        match *self {
            BaseGraph::Ba {
                m,
                min_nodes,
                max_nodes,
            } => {
                let n = rng.gen_range(min_nodes..=max_nodes);
                generate_ba(n, m, rng)
            }
            BaseGraph::Er {
                p,
                min_nodes,
                max_nodes,
            } => {
                let n = rng.gen_range(min_nodes..=max_nodes);
                generate_er(n, p, rng)
            }
        }
    }
}

/// Parameters of a synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub count: usize,
    pub base: BaseGraph,
    /// Leaves per star (STARS).
    pub star_leaves: usize,
    /// Upper bound on attached houses (House-Colour draws 1..=max_houses).
    pub max_houses: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Defaults sized so that mean graph sizes land near the reference
    /// benchmark statistics (Grid 22, Grid-House 123, STARS 64, House-Colour 47).
    pub fn default_for(name: DatasetName, seed: u64) -> Self {
        let (count, base) = match name {
            DatasetName::Grid => (
                2000,
                BaseGraph::Ba {
                    m: 1,
                    min_nodes: 12,
                    max_nodes: 23,
                },
            ),
            DatasetName::GridHouse => (
                1000,
                BaseGraph::Ba {
                    m: 1,
                    min_nodes: 100,
                    max_nodes: 131,
                },
            ),
            DatasetName::Stars => (
                1500,
                BaseGraph::Er {
                    p: 0.05,
                    min_nodes: 49,
                    max_nodes: 49,
                },
            ),
            DatasetName::HouseColour => (
                1000,
                BaseGraph::Ba {
                    m: 1,
                    min_nodes: 30,
                    max_nodes: 44,
                },
            ),
        };
        Self {
            name,
            count,
            base,
            star_leaves: 5,
            max_houses: 3,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.name {
            DatasetName::Stars => 3,
            _ => 2,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.name {
            DatasetName::HouseColour => 3,
            _ => 1,
        }
    }

    /// Per-graph RNG stream: graph `i` is generated from stream `i` of the
    /// dataset seed, so generation order does not matter.
    pub fn graph_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn generate_graph(&self, index: usize) -> Result<Graph> {
        let mut rng = self.graph_rng(index);
        let mut g = self.base.sample(&mut rng)?;
        let label;
        match self.name {
            DatasetName::Grid => {
                label = index % 2;
                if label == 1 {
                    g = attach_motif(&g, Motif::Grid3x3, &mut rng)?;
                }
            }
            DatasetName::GridHouse => {
                // 0: grid only, 1: neither, 2: house only, 3: both
                let case = index % 4;
                let mut motifs = match case {
                    0 => vec![Motif::Grid3x3],
                    2 => vec![Motif::House],
                    3 => vec![Motif::Grid3x3, Motif::House],
                    _ => vec![],
                };
                motifs.shuffle(&mut rng);
                for m in motifs {
                    g = attach_motif(&g, m, &mut rng)?;
                }
                label = usize::from(case == 0 || case == 2);
            }
            DatasetName::Stars => {
                let stars = rng.gen_range(1..=4);
                for _ in 0..stars {
                    g = attach_motif(&g, Motif::Star(self.star_leaves), &mut rng)?;
                }
                label = match stars {
                    1 => 0,
                    2 => 1,
                    _ => 2,
                };
            }
            DatasetName::HouseColour => {
                label = index % 2;
                g.features = (0..g.n).map(|_| Colour::random(&mut rng).one_hot()).collect();
                let houses = rng.gen_range(1..=self.max_houses.max(1));
                let decision_slot = rng.gen_range(0..houses);
                let decision = if label == 1 { Colour::Blue } else { Colour::Green };
                for h in 0..houses {
                    let m = if h == decision_slot {
                        Motif::ColouredHouse(decision)
                    } else {
                        Motif::House
                    };
                    g = attach_motif(&g, m, &mut rng)?;
                }
            }
        }
        g.label = label;
        if g.motif_mask.is_none() {
            g.motif_mask = Some(vec![0; g.n]);
        }
        Ok(g)
    }
}

/// Generates the full benchmark described by `spec`.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Vec<Graph>> {
    if spec.count == 0 {
        return Err(Error::Param("dataset count must be positive".into()));
    }
    (0..spec.count).map(|i| spec.generate_graph(i)).collect()
}
