"""provkernel — a description-driven provenance kernel.

Every domain object is a versioned, append-only Item; workflow definitions
are themselves versioned Items executed against pinned versions; every state
change is an Event with optional XML Outcome; provenance exports as OPM
graphs; a resource-allocation engine matches resources to tasks under
calendar and property constraints using provenance-derived relevance.
"""

from .kernel import Kernel

__version__ = "0.1.0"

__all__ = ["Kernel", "__version__"]
