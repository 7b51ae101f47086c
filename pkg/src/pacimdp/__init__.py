"""Certified controller synthesis for linear systems with sampled noise via interval MDP abstractions."""
from .abstraction import build_imdp, build_states_actions
from .geometry import ABSORBING, Partition
from .imdp import IMDP, Row, TimeVaryingPolicy, improved_synthesis, robust_value_iteration
from .linsys import GroupedSystem, LinearSystem, group_steps
from .scenario import IntervalTable, ProbInterval, interval

__version__ = "0.1.0"
