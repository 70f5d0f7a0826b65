"""Exact forensic likelihood ratios under founder-gene models, with sensitivity bounds."""

from .errors import InputError, NumericalError
from .factor import Factor, Network, Variable, condition, eliminate, marginalize, multiply
from .genetics import CaseSpec, FounderSlot, Marker, compile_case
from .founders import (
    CoancestryParams,
    FounderJoint,
    FounderModel,
    IBDPattern,
    RelationshipPrior,
    SubpopModel,
    cascade,
)

__version__ = "0.1.0"
