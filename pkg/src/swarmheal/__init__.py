"""Connectivity recovery planners for damaged UAV swarms.

Three planners share one simulator: an artificial-potential-field planner
(`apf_recover`), a centering baseline (`centering_baseline`) and a graph
convolutional planner (`gc_recover`) built on a bipartite graph convolution.
"""

from .apf import apf_recover
from .core import (
    DamageScenario,
    HopMatrix,
    RemainedGraph,
    SwarmConfig,
    Usnet,
    build_mdsg,
    build_united_mdsg,
    compute_hops,
    count_subnets_spectral,
    count_subnets_unionfind,
    generate_usnet,
    random_damage,
)
from .errors import SwarmError, ValidationError
from .gcn import GcnModel, TrainConfig, gc_recover, init_model, load_model, save_model
from .gco import BipartiteKernel, build_batch, choose_K, gco_fixed_point
from .io import load_scenario, make_scenario, save_scenario
from .metrics import coverage_ratio, degree_cdf, recovery_summary
from .sim import RecoveryResult, centering_baseline, simulate

__version__ = "0.1.0"

__all__ = [
    "BipartiteKernel", "DamageScenario", "GcnModel", "HopMatrix", "RecoveryResult", "RemainedGraph",
    "SwarmConfig", "SwarmError", "TrainConfig", "Usnet", "ValidationError", "apf_recover", "build_batch",
    "build_mdsg", "build_united_mdsg", "centering_baseline", "choose_K", "compute_hops",
    "count_subnets_spectral", "count_subnets_unionfind", "coverage_ratio", "degree_cdf", "gc_recover",
    "gco_fixed_point", "generate_usnet", "init_model", "load_model", "load_scenario", "make_scenario",
    "random_damage", "recovery_summary", "save_model", "save_scenario", "simulate",
]
