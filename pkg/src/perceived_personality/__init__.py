"""Perceived-personality dynamics in dyads and small groups."""

__version__ = "0.1.0"

from .core import (
    META_NAMES,
    TRAIT_NAMES,
    MetaTraitVector,
    SessionRecord,
    SessionTable,
    TraitTrajectory,
    TraitVector,
    WindowConfig,
    group_average,
    meta_traits,
    session_average,
    snapshot_series,
)
from .errors import (
    DegenerateError,
    NoDataError,
    NumericError,
    PerceivedPersonalityError,
    ValidationError,
)

__all__ = [
    "META_NAMES",
    "TRAIT_NAMES",
    "DegenerateError",
    "MetaTraitVector",
    "NoDataError",
    "NumericError",
    "PerceivedPersonalityError",
    "SessionRecord",
    "SessionTable",
    "TraitTrajectory",
    "TraitVector",
    "ValidationError",
    "WindowConfig",
    "group_average",
    "meta_traits",
    "session_average",
    "snapshot_series",
]
