"""bigsim: bigraph embeddings computed by a family of cooperating
processes, with a centralized oracle and a deterministic simulator."""

from .bigraph import (Bigraph, Control, FreshIds, InvalidEmbedding,
                      ReactionRule, Signature, apply_reaction, iso, validate)
from .embedding import (DomainMismatch, Embedding, check,
                        enumerate_embeddings)
from .pemb import (AtomGraph, atoms_of, candidates, final_check, join, leq,
                   locally_check_edge, meet, quotient)
from .partition import (Overlay, Partition, build_overlay, by_control,
                        by_root, finest, owners, restrict, route)
from .sim import Scenario, SimConfig, Simulator
from .view import HostView, InsufficientView

__all__ = [
    "AtomGraph", "Bigraph", "Control", "DomainMismatch", "Embedding",
    "FreshIds", "HostView", "InsufficientView", "InvalidEmbedding",
    "Overlay", "Partition", "ReactionRule", "Scenario", "SimConfig",
    "Signature", "Simulator", "apply_reaction", "atoms_of", "build_overlay",
    "by_control", "by_root", "candidates", "check", "enumerate_embeddings",
    "final_check", "finest", "iso", "join", "leq", "locally_check_edge",
    "meet", "owners", "quotient", "restrict", "route", "validate",
]
