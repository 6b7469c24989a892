//! Builds the interaction graph of a fresh scenario and prints its nodes,
//! typed edges and one CV's local subgraph.
//!
//! ```text
//! cargo run --example inspect_graph -- [seed]
//! ```

use corridor::graph::{build_graph, build_local, EdgeType, GraphConfig};
use corridor::sim::{init_episode, EpisodeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let world = init_episode(&EpisodeConfig {
        n_vehicles: 8,
        cv_penetration: 0.6,
        seed,
        ..Default::default()
    })?;
    let config = GraphConfig::default();
    let graph = build_graph(&world, &config);

    println!("nodes ({}):", graph.node_count());
    for (i, (id, x)) in graph.node_ids.iter().zip(&graph.x).enumerate() {
        let feats: Vec<String> = x.iter().map(|f| format!("{f:>6.2}")).collect();
        println!("  [{i}] id {id:>2} {:<3} {}", graph.kinds[i].as_str(), feats.join(" "));
    }

    for kind in [EdgeType::Emv, EdgeType::Lane, EdgeType::Proximity, EdgeType::SelfLoop] {
        let edges: Vec<String> = graph
            .edges
            .iter()
            .zip(&graph.edge_types)
            .filter(|(_, t)| **t == kind)
            .map(|(&(s, d), _)| format!("{}->{}", graph.node_ids[s], graph.node_ids[d]))
            .collect();
        println!("{kind:?} edges ({}): {}", edges.len(), edges.join(" "));
    }

    if let Some(&cv) = world.cv_ids().first() {
        let local = build_local(&world, cv, &config)?;
        println!(
            "\nlocal subgraph of CV {cv}: {} nodes {:?}, {} edges, ego at node {}",
            local.graph.node_count(),
            local.graph.node_ids,
            local.graph.edge_count(),
            local.ego_node
        );
    }
    println!("\n{}", serde_json::to_string(&graph.dump())?);
    Ok(())
}
