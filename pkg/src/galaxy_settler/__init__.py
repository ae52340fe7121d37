"""Galactic settlement campaign toolkit.

Plan, simulate, score, and validate star-settlement campaigns in a
rotating disc galaxy: mothership pod drops, fast-ship transfers, and
branching settler waves, all under per-vehicle impulse budgets.
"""

from .units import KMS_PER_KPC_MYR, KPC_IN_KM, MYR_IN_S

__version__ = "0.1.0"

__all__ = ["KPC_IN_KM", "MYR_IN_S", "KMS_PER_KPC_MYR", "__version__"]
