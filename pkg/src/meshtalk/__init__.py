"""Dialog management by behaviour meshing.

A session commits to one slot-filling behaviour at a time (or several in
parallel chat modality), checks each user turn for whether it advances a
committed behaviour, re-routes to another behaviour from the library when
it doesn't, and escalates toward disengagement when nothing accounts for
what was said.
"""

from meshtalk.library import PlanLibrary, parse_library, validate
from meshtalk.engine import Engine, EngineConfig
from meshtalk.sessions import DialogSession

__all__ = [
    "PlanLibrary",
    "parse_library",
    "validate",
    "Engine",
    "EngineConfig",
    "DialogSession",
]
