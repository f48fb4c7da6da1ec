"""Robust constrained MDP planning for multi-robot deployment."""

__version__ = "0.1.0"

from .assignment import TaInstance, TaSolution, assign, solve_rta, solve_ta_exact
from .deployment import DeploymentMap, build_single_robot_rcmdp, generate_map, reference_map
from .model import CmdpModel, ModelError, RandomizedPolicy
from .robust import RcmdpInfeasible, RobustSolution, UncertaintySet, solve_rcmdp

__all__ = [
    "CmdpModel",
    "DeploymentMap",
    "ModelError",
    "RandomizedPolicy",
    "RcmdpInfeasible",
    "RobustSolution",
    "TaInstance",
    "TaSolution",
    "UncertaintySet",
    "assign",
    "build_single_robot_rcmdp",
    "generate_map",
    "reference_map",
    "solve_rcmdp",
    "solve_rta",
    "solve_ta_exact",
]
