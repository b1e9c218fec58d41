from dataclasses import dataclass, field, replace
from typing import Dict, List

from app.models.registration import Sim3Edge
from app.models.sim3 import Sim3


@dataclass
class PoseGraph:
    """Submap poses X_k (submap-local to world) and the accepted edges between them"""

    nodes: Dict[int, Sim3]
    edges: List[Sim3Edge] = field(default_factory=list)
    gauge: int = 0

    @property
    def node_ids(self) -> List[int]:
        return sorted(self.nodes)

    @property
    def free_ids(self) -> List[int]:
        return [k for k in self.node_ids if k != self.gauge]

    def with_nodes(self, nodes: Dict[int, Sim3]) -> "PoseGraph":
        return replace(self, nodes=dict(nodes), edges=list(self.edges))
