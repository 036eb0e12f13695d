"""Cell DTX configuration by a contextual-bandit deep Q agent, with a TTI-level cell simulator."""

from .actions import ActionSpace, DtxConfig, enumerate_actions
from .agent import CellDtxAgent
from .harness import ScenarioConfig
from .rewards import RewardSpec

__all__ = [
    "ActionSpace",
    "CellDtxAgent",
    "DtxConfig",
    "RewardSpec",
    "ScenarioConfig",
    "enumerate_actions",
]
__version__ = "0.1.0"
