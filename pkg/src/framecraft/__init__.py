"""Information design with framing.

Solvers for persuasion problems in which the sender shapes the receiver's
prior (the framing) as well as, optionally, the signaling scheme.
"""
from .core import (
    EpsilonObedience,
    FramecraftError,
    Instance,
    NormalizationRecord,
    SignalingScheme,
    ValidationError,
    ZeroProbabilitySignal,
    best_response,
    direct_scheme,
    inducibility_margin,
    normalize_utilities,
    posterior,
    sender_ex_ante_utility,
    validate_instance,
)

__version__ = "0.1.0"
