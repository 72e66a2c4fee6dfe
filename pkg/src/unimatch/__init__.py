"""Unified and restricted matching decoders for the unfolded color code."""

__version__ = "0.1.0"

from .analytics import (
    enumerate_color_minweight,
    enumerate_surface_minweight,
    n_fail_color,
    n_fail_color_row,
    n_fail_surface_restricted,
    n_fail_surface_unified,
)
from .decoder import (
    BatchDecoder,
    ContractBreach,
    MatchingEngine,
    assess_failure,
    decode_restricted,
    decode_surface_error,
    decode_unified,
    solve_mwpm,
)
from .estimators import (
    FitFailure,
    NoiseModel,
    Problem,
    fit_threshold,
    monte_carlo,
    sample_error,
    splitting_run,
)
from .graphs import build_restricted_graph, build_unified_graph, verify_symmetry
from .lattices import PauliError, build_color_code, build_surface_code, syndrome
from .unfold import build_map, map_error_to_color, verify_stabilizer_relations
