//! Block-diagonal composition of independent agents into one network model.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::FilterSolution;
use crate::linalg::{self, Vector};
use crate::privacy::PrivacyConfig;
use crate::system::SystemModel;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub system: SystemModel,
    pub privacy: PrivacyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub agents: Vec<AgentSpec>,
    pub system: SystemModel,
    /// Per-agent ranges into the stacked state.
    pub offsets: Vec<Range<usize>>,
    /// Per-agent ranges into the stacked output.
    pub output_offsets: Vec<Range<usize>>,
}

impl NetworkModel {
    /// Concatenated per-channel noise scales.
    pub fn sigma(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.privacy.sigma.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

fn check_agent(agent: &AgentSpec) -> Result<()> {
    let q = agent.system.output_dim();
    if agent.privacy.sigma.len() != q {
        return Err(Error::dims(format!("privacy sigma has {} entries, system has {q} outputs", agent.privacy.sigma.len())));
    }
    Ok(())
}

/// Stacks the agents' states, outputs and noise in the given order.
pub fn compose(agents: Vec<AgentSpec>) -> Result<NetworkModel> {
    if agents.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    for (i, agent) in agents.iter().enumerate() {
        if agents[..i].iter().any(|a| a.id == agent.id) {
            return Err(Error::DuplicateAgent(agent.id.clone()));
        }
        check_agent(agent).map_err(|e| Error::Agent {
            id: agent.id.clone(),
            source: Box::new(e),
        })?;
    }

    let mut offsets = Vec::with_capacity(agents.len());
    let mut output_offsets = Vec::with_capacity(agents.len());
    let (mut n, mut q) = (0, 0);
    for agent in &agents {
        offsets.push(n..n + agent.system.state_dim());
        output_offsets.push(q..q + agent.system.output_dim());
        n += agent.system.state_dim();
        q += agent.system.output_dim();
    }

    let h = linalg::block_diagonal(agents.iter().map(|a| a.system.h()));
    let c = linalg::block_diagonal(agents.iter().map(|a| a.system.c()));
    let w = linalg::block_diagonal(agents.iter().map(|a| a.system.w()));
    let x0 = Vector::from_iterator(n, agents.iter().flat_map(|a| a.system.x0_hat().iter().copied()));
    let system = SystemModel::new(h, c, w, x0)?;

    Ok(NetworkModel {
        agents,
        system,
        offsets,
        output_offsets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSlice {
    pub id: String,
    pub trace_prior: f64,
    pub trace_posterior: f64,
}

/// Traces of each agent's diagonal block of `Σ` and `Σ̄`.
pub fn per_agent_slices(network: &NetworkModel, sol: &FilterSolution) -> Result<Vec<AgentSlice>> {
    let n = network.system.state_dim();
    if sol.riccati.sigma.nrows() != n || sol.riccati.sigma_bar.nrows() != n {
        return Err(Error::dims(format!(
            "solution is {}x{}, network state dimension is {n}",
            sol.riccati.sigma.nrows(),
            sol.riccati.sigma.ncols()
        )));
    }
    let block_trace = |m: &linalg::Matrix, r: &Range<usize>| r.clone().map(|i| m[(i, i)]).sum::<f64>();
    Ok(network
        .agents
        .iter()
        .zip(&network.offsets)
        .map(|(agent, range)| AgentSlice {
            id: agent.id.clone(),
            trace_prior: block_trace(&sol.riccati.sigma, range),
            trace_posterior: block_trace(&sol.riccati.sigma_bar, range),
        })
        .collect())
}
