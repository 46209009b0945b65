//! Mounting a crew as a graph node.

use std::sync::Arc;

use crate::gateway::ModelGateway;
use crate::graph::{ChannelValue, NodeError, NodeHandler, StateDelta};

use super::run::kickoff;
use super::spec::CrewSpec;

/// Wrap a crew as a [`NodeHandler`].
///
/// The handler reads each input channel from the graph state (rendered to
/// text) as a crew input keyed by the channel name, kicks the crew off under
/// its declared process, and writes `CrewOutput.final_output` to
/// `output_channel`. The output channel must be declared on the enclosing
/// graph. Crew failures surface as handler errors, so the graph run aborts
/// with node attribution.
pub fn as_graph_node(
    crew: Arc<CrewSpec>,
    input_channels: Vec<String>,
    output_channel: String,
    gateway: Arc<dyn ModelGateway>,
) -> NodeHandler {
    Arc::new(move |state, ctx| {
        let mut inputs = std::collections::BTreeMap::new();
        for channel in &input_channels {
            let value = state
                .get(channel)
                .ok_or_else(|| NodeError::msg(format!("missing input channel {channel:?}")))?;
            inputs.insert(channel.clone(), value.render());
        }
        let output = kickoff(&crew, &inputs, gateway.as_ref(), ctx.trace)
            .map_err(|e| NodeError::msg(format!("crew failed: {e}")))?;
        let mut delta = StateDelta::new();
        delta.insert(
            output_channel.clone(),
            ChannelValue::Text(output.final_output),
        );
        Ok(delta)
    })
}
