"""Termination-complexity analysis and simulation for VASS MDPs."""

from .decision import (MeanPayoffSolution, Mode, NotStronglyConnected, RankingCertificate, Verdict,
                       VerdictTag, check_ranking_certificate, decide_angelic, decide_demonic,
                       max_mean_payoff, min_mean_payoff, ranking_witness, zero_achievable)
from .graph import (MecDecomposition, StructureTag, classify_structure, mec_decomposition,
                    reach_strategy)
from .model import (Config, VassMdp, load_model, parse_model, project_counter, validate,
                    weight_by)
from .oracle import all_increments, bscc_increments, enumerate_md_strategies
from .scheme import build_scheme, nonneg_combination, scheme_constants

__version__ = "0.1.0"

__all__ = [
    "Config",
    "MeanPayoffSolution",
    "MecDecomposition",
    "Mode",
    "NotStronglyConnected",
    "RankingCertificate",
    "StructureTag",
    "VassMdp",
    "Verdict",
    "VerdictTag",
    "all_increments",
    "bscc_increments",
    "build_scheme",
    "check_ranking_certificate",
    "classify_structure",
    "decide_angelic",
    "decide_demonic",
    "enumerate_md_strategies",
    "load_model",
    "max_mean_payoff",
    "mec_decomposition",
    "min_mean_payoff",
    "nonneg_combination",
    "parse_model",
    "project_counter",
    "ranking_witness",
    "reach_strategy",
    "scheme_constants",
    "validate",
    "weight_by",
    "zero_achievable",
]
