"""renormforest: a symbolic workbench for the renormalization of decorated
trees — extraction coactions and twisted antipodes, forest/cut expansions,
safe-forest multiscale bookkeeping, and coalescence-tree power counting,
all in exact rational arithmetic."""

from .scaling import ExtLabel, MultiIndex, ScalingSpec, TypeTable
from .trees import DecoratedTree, Forest, SubForest, integrate, noise, poly, tree_product
from .formal import FormalSum
from .rules import CumulantSet, RuleSpec, check_subcritical, generate_trees, production
from .forests import div_enumerate, cut_enumerate, sigma_negative, sigma_positive
from .hopf import (
    antipode_minus,
    antipode_plus,
    bphz_expansion,
    counterterm_report,
    delta_minus,
    delta_plus,
)
from .multiscale import EdgeUniverse, harvested_cuts, path_scale, reorganize, safe_projection
from .coalescence import TotalHomogeneity, build_coalescence, enumerate_trees, scale_sum
from .powercount import Certifier, CertificateInput, CumulantHomogeneity
from .integrands import build_W, chaos_classes, interval_expansion_check
from .workbench import Workbench, parse_config, report_emit

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
