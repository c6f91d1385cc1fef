use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::{Edge, GraphError, KnowledgeGraph};

const SUPPLIES_TO: &str = "suppliesTo";
const OWNS: &str = "owns";
const PRODUCES: &str = "produces";
const LOCATED_IN: &str = "locatedIn";

/// Node ids plus the edges connecting them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<Edge>,
}

/// Upstream view of a company. Tier 0 holds the company itself; tier k
/// holds suppliers k reverse-`suppliesTo` hops away. Enrichment nodes hang
/// off reached suppliers and carry no tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TieredSubgraph {
    pub root: String,
    pub tiers: BTreeMap<usize, BTreeSet<String>>,
    pub enrichment: BTreeSet<String>,
    pub edges: Vec<Edge>,
}

impl TieredSubgraph {
    pub fn tier_of(&self, id: &str) -> Option<usize> {
        self.tiers.iter().find(|(_, ids)| ids.contains(id)).map(|(&t, _)| t)
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.tiers.values().flatten().chain(&self.enrichment).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedSuppliers {
    pub suppliers: BTreeSet<String>,
    /// `suppliesTo` edges from each shared supplier to either buyer.
    pub edges: Vec<Edge>,
}

fn collect(g: &KnowledgeGraph, idx: BTreeSet<usize>) -> Vec<Edge> {
    idx.into_iter().map(|i| g.edges()[i].clone()).collect()
}

pub fn upstream_suppliers(g: &KnowledgeGraph, company_id: &str, max_depth: usize) -> Result<TieredSubgraph, GraphError> {
    g.require(company_id, "Company")?;
    if max_depth == 0 {
        return Err(GraphError::InvalidDepth);
    }
    let mut depth: BTreeMap<String, usize> = BTreeMap::from([(company_id.to_string(), 0)]);
    let mut queue = VecDeque::from([company_id.to_string()]);
    let mut used = BTreeSet::new();
    while let Some(buyer) = queue.pop_front() {
        let d = depth[&buyer];
        if d == max_depth {
            continue;
        }
        for (i, e) in g.incoming(&buyer).filter(|(_, e)| e.rel_type == SUPPLIES_TO) {
            used.insert(i);
            if !depth.contains_key(&e.source) {
                depth.insert(e.source.clone(), d + 1);
                queue.push_back(e.source.clone());
            }
        }
    }

    let mut enrichment = BTreeSet::new();
    for (id, _) in depth.iter().filter(|(_, &d)| d > 0) {
        for (i, e) in g.outgoing(id) {
            let target_label = g.node(&e.target).map(|n| n.label.as_str());
            let keep = match e.rel_type.as_str() {
                OWNS => target_label == Some("Mine"),
                PRODUCES => matches!(target_label, Some("Material" | "Product")),
                _ => false,
            };
            if keep {
                used.insert(i);
                if !depth.contains_key(&e.target) {
                    enrichment.insert(e.target.clone());
                }
            }
        }
    }

    let mut tiers: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (id, d) in depth {
        tiers.entry(d).or_default().insert(id);
    }
    Ok(TieredSubgraph { root: company_id.to_string(), tiers, enrichment, edges: collect(g, used) })
}

/// Direct suppliers of `buyer` with the edge indices.
fn suppliers(g: &KnowledgeGraph, buyer: &str) -> BTreeMap<String, usize> {
    g.incoming(buyer)
        .filter(|(_, e)| e.rel_type == SUPPLIES_TO)
        .map(|(i, e)| (e.source.clone(), i))
        .collect()
}

pub fn shared_suppliers(g: &KnowledgeGraph, company_a: &str, company_b: &str) -> Result<SharedSuppliers, GraphError> {
    g.require(company_a, "Company")?;
    g.require(company_b, "Company")?;
    let a = suppliers(g, company_a);
    let b = suppliers(g, company_b);
    let mut used = BTreeSet::new();
    let mut shared = BTreeSet::new();
    for (s, &ia) in &a {
        if let Some(&ib) = b.get(s) {
            shared.insert(s.clone());
            used.insert(ia);
            used.insert(ib);
        }
    }
    Ok(SharedSuppliers { suppliers: shared, edges: collect(g, used) })
}

pub fn material_network(g: &KnowledgeGraph, material_id: &str) -> Result<Subgraph, GraphError> {
    g.require(material_id, "Material")?;
    let is = |id: &str, label: &str| g.node(id).is_some_and(|n| n.label == label);
    let mut used = BTreeSet::new();
    let mut producers = BTreeSet::new();
    for (i, e) in g.incoming(material_id) {
        if e.rel_type == PRODUCES && is(&e.source, "Company") {
            used.insert(i);
            producers.insert(e.source.clone());
        }
    }
    for p in &producers {
        for (i, e) in g.outgoing(p) {
            match e.rel_type.as_str() {
                LOCATED_IN => {
                    used.insert(i);
                }
                OWNS => {
                    used.insert(i);
                    if is(&e.target, "Mine") {
                        for (j, m) in g.outgoing(&e.target) {
                            if m.rel_type == LOCATED_IN {
                                used.insert(j);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        for (i, e) in g.incoming(p) {
            if e.rel_type == OWNS {
                used.insert(i);
            }
        }
    }
    let edges = collect(g, used);
    let mut nodes = BTreeSet::from([material_id.to_string()]);
    for e in &edges {
        nodes.insert(e.source.clone());
        nodes.insert(e.target.clone());
    }
    Ok(Subgraph { nodes, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::graph::tests::{edge, node};
    use crate::schema::default_schema;
    use proptest::prelude::*;

    fn diamond() -> KnowledgeGraph {
        // A <- B <- D, A <- C <- D
        build_graph(
            ["A", "B", "C", "D"].iter().map(|n| node(n, "Company", n)).collect(),
            vec![
                edge("B", "suppliesTo", "A"),
                edge("C", "suppliesTo", "A"),
                edge("D", "suppliesTo", "B"),
                edge("D", "suppliesTo", "C"),
            ],
            &default_schema(),
        )
        .unwrap()
    }

    #[test]
    fn diamond_minimum_tier() {
        let up = upstream_suppliers(&diamond(), "A", 3).unwrap();
        assert_eq!(up.tiers[&0], BTreeSet::from(["A".to_string()]));
        assert_eq!(up.tiers[&1], BTreeSet::from(["B".to_string(), "C".to_string()]));
        assert_eq!(up.tiers[&2], BTreeSet::from(["D".to_string()]));
        assert_eq!(up.tiers.values().map(BTreeSet::len).sum::<usize>(), 4);
        assert_eq!(up.edges.len(), 4);
        let shallow = upstream_suppliers(&diamond(), "A", 1).unwrap();
        assert_eq!(shallow.tier_of("D"), None);
        assert_eq!(shallow.edges.len(), 2);
    }

    #[test]
    fn no_suppliers() {
        let up = upstream_suppliers(&diamond(), "D", 3).unwrap();
        assert_eq!(up.tiers.len(), 1);
        assert!(up.enrichment.is_empty() && up.edges.is_empty());
    }

    #[test]
    fn enrichment_adds_mines_and_products() {
        let g = build_graph(
            vec![
                node("oem", "Company", "OEM"),
                node("cell", "Company", "CellCo"),
                node("miner", "Company", "MinerCo"),
                node("m1", "Mine", "Pit"),
                node("li", "Material", "Lithium"),
                node("loc", "Location", "Chile"),
            ],
            vec![
                edge("cell", "suppliesTo", "oem"),
                edge("miner", "suppliesTo", "cell"),
                edge("miner", "owns", "m1"),
                edge("miner", "produces", "li"),
                edge("miner", "locatedIn", "loc"),
            ],
            &default_schema(),
        )
        .unwrap();
        let up = upstream_suppliers(&g, "oem", 3).unwrap();
        assert_eq!(up.tier_of("miner"), Some(2));
        assert_eq!(up.enrichment, BTreeSet::from(["li".to_string(), "m1".to_string()]));
        assert_eq!(up.edges.len(), 4);
        assert!(!up.node_ids().contains("loc"));
    }

    #[test]
    fn query_errors() {
        let g = diamond();
        assert_eq!(upstream_suppliers(&g, "Z", 2), Err(GraphError::UnknownNode("Z".into())));
        assert_eq!(upstream_suppliers(&g, "A", 0), Err(GraphError::InvalidDepth));
        assert!(matches!(material_network(&g, "A"), Err(GraphError::WrongNodeType { .. })));
        assert!(matches!(shared_suppliers(&g, "A", "Q"), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn shared() {
        let g = diamond();
        let s = shared_suppliers(&g, "B", "C").unwrap();
        assert_eq!(s.suppliers, BTreeSet::from(["D".to_string()]));
        assert_eq!(s.edges.len(), 2);
        let reflexive = shared_suppliers(&g, "A", "A").unwrap();
        assert_eq!(reflexive.suppliers, BTreeSet::from(["B".to_string(), "C".to_string()]));
        assert!(shared_suppliers(&g, "A", "B").unwrap().suppliers.is_empty());
    }

    #[test]
    fn six_node_material_network() {
        let g = build_graph(
            vec![
                node("ni", "Material", "Nickel"),
                node("nn", "Company", "Nornickel"),
                node("ru", "Location", "Russia"),
                node("kola", "Company", "Kola MMC"),
                node("tal", "Mine", "Talnakh"),
                node("bmw", "Company", "BMW"),
            ],
            vec![
                edge("nn", "produces", "ni"),
                edge("nn", "locatedIn", "ru"),
                edge("nn", "owns", "kola"),
                edge("nn", "owns", "tal"),
                edge("tal", "locatedIn", "ru"),
                edge("nn", "suppliesTo", "bmw"),
            ],
            &default_schema(),
        )
        .unwrap();
        let net = material_network(&g, "ni").unwrap();
        let ids: BTreeSet<String> = ["ni", "nn", "ru", "kola", "tal"].iter().map(|s| s.to_string()).collect();
        assert_eq!(net.nodes, ids);
        let keys: Vec<(&str, &str, &str)> = net.edges.iter().map(Edge::key).collect();
        assert_eq!(
            keys,
            [
                ("nn", "locatedIn", "ru"),
                ("nn", "owns", "kola"),
                ("nn", "owns", "tal"),
                ("nn", "produces", "ni"),
                ("tal", "locatedIn", "ru"),
            ]
        );
        let lonely = build_graph(vec![node("co", "Material", "Cobalt")], vec![], &default_schema()).unwrap();
        let net = material_network(&lonely, "co").unwrap();
        assert_eq!(net.nodes.len(), 1);
        assert!(net.edges.is_empty());
    }

    /// Shortest reverse-suppliesTo distance by repeated relaxation.
    fn brute_force_tiers(n: usize, edges: &[(usize, usize)], root: usize, max: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; n];
        dist[root] = Some(0);
        for _ in 0..n {
            for &(s, t) in edges {
                if let Some(dt) = dist[t] {
                    if dt < max && dist[s].is_none_or(|ds| ds > dt + 1) {
                        dist[s] = Some(dt + 1);
                    }
                }
            }
        }
        dist
    }

    proptest! {
        #[test]
        fn tiers_match_brute_force(
            n in 2usize..20,
            raw in proptest::collection::vec((0usize..20, 0usize..20), 0..60),
            max in 1usize..6,
        ) {
            let mut pairs: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
            pairs.sort();
            pairs.dedup();
            let g = build_graph(
                (0..n).map(|i| node(&format!("n{i}"), "Company", &format!("N{i}"))).collect(),
                pairs.iter().map(|(s, t)| edge(&format!("n{s}"), "suppliesTo", &format!("n{t}"))).collect(),
                &default_schema(),
            ).unwrap();
            let before = g.digest();
            let up = upstream_suppliers(&g, "n0", max).unwrap();
            let expected = brute_force_tiers(n, &pairs, 0, max);
            for (i, d) in expected.iter().enumerate() {
                prop_assert_eq!(up.tier_of(&format!("n{i}")), *d);
            }
            let total: usize = up.tiers.values().map(BTreeSet::len).sum();
            prop_assert_eq!(total, expected.iter().flatten().count());

            let a = shared_suppliers(&g, "n0", "n1").unwrap();
            let b = shared_suppliers(&g, "n1", "n0").unwrap();
            prop_assert_eq!(a.suppliers, b.suppliers);
            prop_assert_eq!(g.digest(), before);
        }
    }
}
