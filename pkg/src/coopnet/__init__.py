"""Cooperative ad hoc network simulator."""
from .model import (
    BinaryGraph,
    ChannelParams,
    ConnectivityMatrix,
    Deployment,
    Domain,
    analytic_mean_degree,
    build_connectivity_matrix,
    degree_pmf,
    local_connection_probability,
    pair_connectivity,
    path_loss,
    realize_edges,
    sample_deployment,
)
from .metrics import AssortativityResult, DegreeStats, assortativity, cooperation_graph, degree_stats
from .dynamics import (
    CooperationState,
    GameParams,
    IntegrationFault,
    IntegratorConfig,
    TrajectoryRecord,
    euler_step,
    evolve,
    potential,
    rate_matrix,
    total_payoff,
)

__version__ = "0.1.0"
