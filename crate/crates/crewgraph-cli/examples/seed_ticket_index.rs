//! Build a small demo vector index of namespaced historical tickets.
//!
//! ```text
//! cargo run -p crewgraph-cli --example seed_ticket_index -- demo/ticket_index.json
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crewgraph::gateway::mock_embedding;
use crewgraph::vector::VectorIndex;

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo/ticket_index.json".to_string())
        .into();

    let history = [
        ("network", "core router unreachable after power work"),
        ("network", "packet loss between region 1 and region 2"),
        ("network", "switch stack rebooting in branch office"),
        ("network", "bgp session flapping on the upstream link"),
        ("network", "wifi outage on floors three to five"),
        ("billing", "invoice total does not match the contract"),
        ("billing", "customer charged twice for the same month"),
        ("billing", "refund for cancelled service not received"),
        ("billing", "tax rate wrong on the latest statement"),
        ("billing", "payment portal rejects a valid card"),
    ];

    let mut index = VectorIndex::new(64);
    for (i, (category, text)) in history.iter().enumerate() {
        let embedded = mock_embedding(&format!("{category}::{text}"));
        let payload = BTreeMap::from([("category".to_string(), category.to_string())]);
        index
            .add(format!("hist-{i:02}"), &embedded, payload)
            .expect("unique ids and matching dims");
    }
    index.save(&out).expect("write index");
    println!(
        "wrote {} with {} historical tickets (dim {})",
        out.display(),
        index.len(),
        index.dim()
    );
}
