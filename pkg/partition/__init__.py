"""
Phase-space partition machinery
Grid cells near the singularity, the inductive refinement with return
records, bound periods, depth ledgers and distortion checks
"""

from .grid import Grid, GridIndex, cell_bounds
from .partition_engine import (
    BoundPeriodReport,
    DepthFrequency,
    DepthLedger,
    PartitionElement,
    PartitionRun,
    PartitionState,
    bound_period,
    bound_period_report,
    depth_frequency,
    depth_ledger,
    distortion_ratio,
    essential_depth_pairs,
    essential_depth_sum,
    initial_partition,
    ledger_table,
    refine,
    run_partition,
)

__all__ = [
    'Grid', 'GridIndex', 'cell_bounds',
    'BoundPeriodReport', 'DepthFrequency', 'DepthLedger', 'PartitionElement', 'PartitionRun',
    'PartitionState', 'bound_period', 'bound_period_report', 'depth_frequency', 'depth_ledger',
    'distortion_ratio', 'essential_depth_pairs', 'essential_depth_sum', 'initial_partition', 'ledger_table',
    'refine', 'run_partition',
]
