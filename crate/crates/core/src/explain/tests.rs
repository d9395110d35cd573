use super::*;
use crate::graphdata::Graph;
use crate::metrics::GraphConcepts;

type PResult<T> = std::result::Result<T, String>;

/// Nodes and edges recovered from a DOT document.
#[derive(Debug, Default)]
struct Parsed {
    nodes: Vec<(String, Vec<(String, String)>)>,
    edges: Vec<(String, String)>,
    clusters: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Punct(&'static str),
}

fn lex(src: &str) -> PResult<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        s.push(*chars.get(i + 1).ok_or("dangling escape")?);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            out.push(Tok::Punct("--"));
            i += 2;
        } else if let Some(p) = ["{", "}", "[", "]", "=", ";", ","]
            .into_iter()
            .find(|p| p.starts_with(c))
        {
            out.push(Tok::Punct(p));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '#' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || "_.#".contains(chars[i])) {
                i += 1;
            }
            out.push(Tok::Id(chars[start..i].iter().collect()));
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn punct(&mut self, p: &str) -> PResult<()> {
        match self.toks.get(self.pos) {
            Some(Tok::Punct(q)) if *q == p => {
                self.pos += 1;
                Ok(())
            }
            other => Err(format!("expected {p}, got {other:?}")),
        }
    }

    fn id(&mut self) -> PResult<String> {
        match self.toks.get(self.pos) {
            Some(Tok::Id(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            other => Err(format!("expected identifier, got {other:?}")),
        }
    }

    fn attrs(&mut self) -> PResult<Vec<(String, String)>> {
        let mut out = Vec::new();
        if self.peek() != Some(&Tok::Punct("[")) {
            return Ok(out);
        }
        self.punct("[")?;
        while self.peek() != Some(&Tok::Punct("]")) {
            let k = self.id()?;
            self.punct("=")?;
            out.push((k, self.id()?));
            if matches!(self.peek(), Some(Tok::Punct(",")) | Some(Tok::Punct(";"))) {
                self.pos += 1;
            }
        }
        self.punct("]")?;
        Ok(out)
    }

    fn stmts(&mut self, g: &mut Parsed) -> PResult<()> {
        self.punct("{")?;
        loop {
            match self.peek() {
                Some(Tok::Punct("}")) => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(Tok::Punct(";")) => self.pos += 1,
                Some(Tok::Id(kw)) if kw == "subgraph" => {
                    self.pos += 1;
                    if matches!(self.peek(), Some(Tok::Id(_))) {
                        self.id()?;
                    }
                    g.clusters += 1;
                    self.stmts(g)?;
                }
                Some(Tok::Id(kw)) if kw == "node" || kw == "edge" || kw == "graph" => {
                    self.pos += 1;
                    self.attrs()?;
                }
                Some(Tok::Id(_)) => {
                    let first = self.id()?;
                    if self.peek() == Some(&Tok::Punct("=")) {
                        self.pos += 1;
                        self.id()?;
                        continue;
                    }
                    let mut chain = vec![first];
                    while self.peek() == Some(&Tok::Punct("--")) {
                        self.pos += 1;
                        chain.push(self.id()?);
                    }
                    let attrs = self.attrs()?;
                    if chain.len() == 1 {
                        g.nodes.push((chain.pop().unwrap(), attrs));
                    } else {
                        for w in chain.windows(2) {
                            g.edges.push((w[0].clone(), w[1].clone()));
                        }
                    }
                }
                other => return Err(format!("unexpected token {other:?}")),
            }
        }
    }
}

/// Parses the undirected-graph subset of DOT.
fn parse_dot(src: &str) -> PResult<Parsed> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    match p.id()?.as_str() {
        "graph" => {}
        other => return Err(format!("expected 'graph', got {other}")),
    }
    if matches!(p.peek(), Some(Tok::Id(_))) {
        p.id()?;
    }
    let mut g = Parsed::default();
    p.stmts(&mut g)?;
    if p.pos != p.toks.len() {
        return Err("trailing tokens".into());
    }
    Ok(g)
}

fn attr<'a>(node: &'a (String, Vec<(String, String)>), key: &str) -> Option<&'a str> {
    node.1.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn path_graph(n: usize) -> Graph {
    let edges: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
    Graph::unfeatured(n, &edges, 1).unwrap()
}

fn concepts(node_rows: Vec<Vec<f64>>, assignments: Vec<Vec<f64>>) -> GraphConcepts {
    let k = assignments[0].len();
    GraphConcepts {
        label: 1,
        prediction: 1,
        node_concepts: node_rows,
        subgraph_node_concepts: None,
        subgraph_concepts: Some((0..k).map(|j| vec![j as f64, 1.0]).collect()),
        importance: Some((0..k).map(|j| 0.1 + 0.2 * j as f64).collect()),
        graph_concept: vec![1.0; k],
        assignments: Some(assignments),
    }
}

#[test]
fn dot_parser_rejects_garbage() {
    assert!(parse_dot("graph { a -- }").is_err());
    assert!(parse_dot("digraph { a }").is_err());
    assert!(parse_dot("graph { \"a\" [x=\"1\"]; \"a\" -- \"b\"; }").is_ok());
}

#[test]
fn identical_encodings_form_one_group() {
    let g = path_graph(4);
    let c = concepts(vec![vec![1.0, 0.2]; 4], vec![vec![1.0, 0.0]; 4]);
    let items = [Explained {
        id: 0,
        graph: &g,
        concepts: &c,
    }];
    let groups = concept_groups(&items, ConceptLevel::NodeGraphSpace, 3).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].members, vec![(0, 0), (0, 1), (0, 2), (0, 3)]);
    // all distances tie, so ids decide
    assert_eq!(groups[0].representatives, vec![(0, 0), (0, 1), (0, 2)]);
    assert_eq!(groups[0].code, "10");
}

#[test]
fn groups_share_the_metric_binarization() {
    let g = path_graph(5);
    let rows = vec![
        vec![1.0, 0.3, 0.7],
        vec![0.2, 1.0, 0.1],
        vec![1.0, 0.5, 0.49],
        vec![0.6, 1.0, 0.2],
        vec![1.0, 0.31, 0.69],
    ];
    let c = concepts(rows.clone(), vec![vec![0.5, 0.5]; 5]);
    let items = [Explained {
        id: 3,
        graph: &g,
        concepts: &c,
    }];
    let groups = concept_groups(&items, ConceptLevel::NodeGraphSpace, 5).unwrap();
    for grp in &groups {
        for &(_, v) in &grp.members {
            assert_eq!(concept_code(&rows[v]), grp.code);
        }
        assert!(grp.representatives.iter().all(|r| grp.members.contains(r)));
    }
    let big = groups.iter().find(|g| g.code == "101").unwrap();
    // node 0 and node 4 sit symmetrically around the centroid
    assert_eq!(big.representatives, vec![(3, 0), (3, 4)]);
    assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), 5);
    assert!(concept_groups(&items, ConceptLevel::NodeSubgraphSpace, 5).is_err());
}

#[test]
fn representatives_sorted_by_distance() {
    let g = path_graph(4);
    let rows = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![1.0, 0.45], vec![1.0, 0.3]];
    let c = concepts(rows, vec![vec![1.0]; 4]);
    let items = [Explained {
        id: 0,
        graph: &g,
        concepts: &c,
    }];
    let grp = &concept_groups(&items, ConceptLevel::NodeGraphSpace, 4).unwrap()[0];
    // centroid second coordinate 0.2125
    assert_eq!(grp.representatives, vec![(0, 3), (0, 1), (0, 0), (0, 2)]);
}

#[test]
fn zero_hops_shows_only_the_anchor() {
    let g = path_graph(5);
    let c = concepts(vec![vec![1.0, 0.0]; 5], vec![vec![1.0]; 5]);
    let items = [Explained {
        id: 0,
        graph: &g,
        concepts: &c,
    }];
    let grp = &concept_groups(&items, ConceptLevel::NodeGraphSpace, 2).unwrap()[0];
    let d = parse_dot(&node_concept_dot(&items, grp, 0, "t").unwrap()).unwrap();
    assert_eq!(d.nodes.len(), 2);
    assert!(d.edges.is_empty());
    assert_eq!(d.clusters, 2);

    let d1 = parse_dot(&node_concept_dot(&items, grp, 1, "t").unwrap()).unwrap();
    // node 0 sees {0,1}, node 1 sees {0,1,2}
    assert_eq!(d1.nodes.len(), 5);
    assert_eq!(d1.edges.len(), 3);
    assert_eq!(neighbourhood(&g, 2, 2), vec![0, 1, 2, 3, 4]);
}

#[test]
fn cluster_colouring_tracks_membership() {
    let g = path_graph(4);
    let uniform = concepts(vec![vec![1.0]; 4], vec![vec![0.5, 0.5]; 4]);
    let e = Explained {
        id: 0,
        graph: &g,
        concepts: &uniform,
    };
    let d = parse_dot(&cluster_dot(&e, 0, "u", "u").unwrap()).unwrap();
    let fills: Vec<&str> = d.nodes.iter().map(|n| attr(n, "fillcolor").unwrap()).collect();
    assert!(fills.iter().all(|f| *f == fills[0]));
    assert_eq!(d.edges.len(), 3);

    let hard = concepts(
        vec![vec![1.0]; 4],
        vec![vec![1., 0.], vec![0., 1.], vec![1., 0.], vec![0., 1.]],
    );
    let e = Explained {
        id: 0,
        graph: &g,
        concepts: &hard,
    };
    let d = parse_dot(&cluster_dot(&e, 1, "h", "h").unwrap()).unwrap();
    let mut tones: Vec<&str> = d.nodes.iter().map(|n| attr(n, "fillcolor").unwrap()).collect();
    tones.sort();
    tones.dedup();
    assert_eq!(tones, vec![cluster_shade(1, 1.0).as_str(), "#ffffff"]);
    assert!(cluster_dot(&e, 2, "x", "x").is_err());
}

#[test]
fn instance_sets_partition_and_pass_through() {
    let mut g = path_graph(6);
    g.motif_mask = Some(vec![0, 0, 1, 1, 1, 0]);
    let a = vec![
        vec![0.9, 0.1, 0.0],
        vec![0.8, 0.2, 0.0],
        vec![0.1, 0.1, 0.8],
        vec![0.0, 0.3, 0.7],
        vec![0.2, 0.5, 0.3],
        vec![0.6, 0.2, 0.2],
    ];
    let c = concepts(vec![vec![1.0]; 6], a);
    let e = Explained {
        id: 9,
        graph: &g,
        concepts: &c,
    };
    let x = explain_instance(&e).unwrap();
    assert_eq!(x.cluster_nodes, vec![vec![0, 1, 5], vec![4], vec![2, 3]]);
    assert_eq!(x.importance, c.importance.clone().unwrap());
    assert_eq!(x.motif_cluster, Some(2));
    assert_eq!(x.node_strength[4], 0.5);

    let dots = instance_dots(&e, &x, "i");
    assert_eq!(dots.len(), 3);
    let mut solid = Vec::new();
    for (k, d) in dots.iter().enumerate() {
        assert!(d.contains(&format!("importance {:.4}", x.importance[k])));
        let p = parse_dot(d).unwrap();
        assert_eq!(p.nodes.len(), 6);
        solid.extend(
            p.nodes
                .iter()
                .filter(|n| attr(n, "style").is_none())
                .map(|n| n.0.clone()),
        );
    }
    solid.sort();
    assert_eq!(solid, (0..6).map(|v| format!("n{v}")).collect::<Vec<_>>());
    let table = activation_table(&x);
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn motif_separation_against_mask() {
    let mut g = path_graph(4);
    g.motif_mask = Some(vec![0, 0, 1, 1]);
    let c = concepts(
        vec![vec![1.0]; 4],
        vec![vec![0.2, 0.8], vec![0.4, 0.6], vec![0.9, 0.1], vec![0.7, 0.3]],
    );
    let plain = path_graph(3);
    let pc = concepts(vec![vec![1.0]; 3], vec![vec![1.0, 0.0]; 3]);
    let items = [
        Explained {
            id: 0,
            graph: &g,
            concepts: &c,
        },
        Explained {
            id: 1,
            graph: &plain,
            concepts: &pc,
        },
    ];
    assert!((motif_separation(&items, 0).unwrap() - 0.5).abs() < 1e-12);
    assert!((motif_separation(&items, 1).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(motif_separation(&items[1..], 0), None);
}

#[test]
fn bundle_files_parse_and_json_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let gs: Vec<Graph> = (3..7).map(path_graph).collect();
    let cs: Vec<GraphConcepts> = gs
        .iter()
        .map(|g| {
            let rows = (0..g.n).map(|v| vec![1.0, (v % 2) as f64]).collect();
            let a = (0..g.n)
                .map(|v| if v % 2 == 0 { vec![0.8, 0.2] } else { vec![0.3, 0.7] })
                .collect();
            concepts(rows, a)
        })
        .collect();
    let items: Vec<Explained> = gs
        .iter()
        .zip(&cs)
        .enumerate()
        .map(|(i, (graph, concepts))| Explained { id: i, graph, concepts })
        .collect();
    let opts = ExplainOptions {
        dataset: "grid".into(),
        model: "scn".into(),
        hops: 1,
        representatives: 2,
        instances: 2,
    };
    let bundle = write_bundle(dir.path(), &items, &opts).unwrap();
    let subgraph_files = bundle
        .files
        .iter()
        .filter(|f| f.starts_with("grid_scn_subgraph_"))
        .count();
    assert!(subgraph_files >= 2);
    assert_eq!(bundle.clusters.len(), 2);
    assert_eq!(bundle.instances.len(), 2);
    for f in bundle.files.iter().filter(|f| f.ends_with(".dot")) {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        parse_dot(&text).unwrap_or_else(|e| panic!("{f}: {e}"));
    }
    let json = std::fs::read_to_string(dir.path().join("explanations.json")).unwrap();
    let back: ExplanationBundle = serde_json::from_str(&json).unwrap();
    assert_eq!(back, bundle);
}

#[test]
fn quoting_survives_the_parser() {
    let mut w = DotWriter::new("q\"x", "say \"hi\"\\");
    w.node("a b", &[("label", "x\"y".into())]);
    let p = parse_dot(&w.finish()).unwrap();
    assert_eq!(p.nodes[0].0, "a b");
    assert_eq!(attr(&p.nodes[0], "label"), Some("x\"y"));
}
