"""Variational laboratory for the Bogoliubov-Dirac-Fock model.

Submodules: ``radial`` and ``spinors`` (partial waves), ``dressing`` (dressed
free vacuum), ``nonrel`` (Pekar and multiplet limits), ``energy`` (BDF energy
of finite-rank states), ``galerkin`` (truncated Gaussian basis), ``geometry``
(projector manifold and component labels), ``vacpol`` (vacuum response),
``flows`` (descent, mountain pass) and ``cli``.
"""

from .dressing import DressedDispersion, NonConvergence, RegimeViolation, dress
from .energy import EnergyBreakdown, FiniteRankState, bdf_energy, build_multiplet_trial, build_pekar_trial
from .flows import CriticalPointReport, minimize_component, mountain_pass
from .galerkin import TruncatedBasis, multiplet_basis, para_basis, vacuum_basis
from .geometry import ComponentLabel, DifferenceDecomposition, classify, decompose
from .nonrel import NRChannelProblem, channel_minimize, pekar_minimize
from .radial import RadialMesh
from .spinors import AngularChannel, ChannelOrbital

__version__ = "0.1.0"

__all__ = [
    "AngularChannel",
    "ChannelOrbital",
    "ComponentLabel",
    "CriticalPointReport",
    "DifferenceDecomposition",
    "DressedDispersion",
    "EnergyBreakdown",
    "FiniteRankState",
    "NRChannelProblem",
    "NonConvergence",
    "RadialMesh",
    "RegimeViolation",
    "TruncatedBasis",
    "bdf_energy",
    "build_multiplet_trial",
    "build_pekar_trial",
    "channel_minimize",
    "classify",
    "decompose",
    "dress",
    "minimize_component",
    "mountain_pass",
    "multiplet_basis",
    "para_basis",
    "pekar_minimize",
    "vacuum_basis",
]
