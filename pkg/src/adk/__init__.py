"""Alternating-difference (AD-k) set functions and threshold diffusion.

Exact rational tooling for checking whether local AD-k threshold functions
give a globally AD-k spread function.
"""
from .setfn import (
    INF,
    ADkReport,
    GroundSet,
    Partition,
    SetFunction,
    compound,
    compound_eval_continuous,
    difference,
    enumerate_partitions,
    is_adk,
    iterated_difference,
    mobius,
    mobius_inverse,
    multilinear_eval,
    multilinear_partial,
    partition_derivative,
)
from .diffusion import (
    BudgetExceeded,
    DirectedGraph,
    GTInstance,
    LayerAssignment,
    SpreadResult,
    TriggeringInstance,
    exact_spread,
    layered_activation,
    live_edge_spread,
    monte_carlo_spread,
    reach_distribution,
    spread_table,
    validate_gt,
)
from .transforms import (
    NodeMap,
    NotADAG,
    NotADInfinity,
    dag_layering,
    dag_to_layered,
    gt_to_triggering,
    lift_layered,
    triggering_to_gt,
    verify_transform,
)
from .conjecture import (
    ConjectureReport,
    GenConfig,
    GenerationBudgetExhausted,
    gen_adk_function,
    global_adk_check,
    run_campaign,
    verify_identities,
)
from .fileformat import ParseError, parse_instance, serialize_instance

__version__ = "0.1.0"
