"""Out-of-core swap scheduling: byte-window scheduler, allocator models and a transfer/compute simulator."""
from .allocator import BestFitAllocator, DeviceOOM, VirtualAddressAllocator
from .baselines import LmsConfig, lms_schedule, naive_schedule
from .graph import NetworkGraph, build_variable_sequence, footprint_stats, load_graph, sequence_for, topological_order
from .scheduler import InfeasibleBudget, Schedule, WindowConfig, build_schedule, min_feasible_budget, validate_schedule
from .simulator import CostModel, lower_bounds, simulate
from .workloads import WorkloadSpec, generate, resnet50_like

__version__ = "0.1.0"
