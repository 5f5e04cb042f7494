from .base import CoordinatorState, CPhase, ParticipantState, PPhase, ProtocolNode
from .cornus import BUG_SKIP_LOGONCE, CornusNode
from .twopc import COOPERATIVE, NAIVE, TwoPCNode

PROTOCOLS = {"cornus": CornusNode, "2pc": TwoPCNode}

__all__ = ["BUG_SKIP_LOGONCE", "COOPERATIVE", "NAIVE", "PROTOCOLS", "CoordinatorState", "CPhase", "CornusNode",
           "ParticipantState", "PPhase", "ProtocolNode", "TwoPCNode"]
