"""Unit conversions for the mixed kpc / km/s / Myr unit system.

All public interfaces speak kpc (positions), km/s (velocities) and Myr
(times).  Internally every propagation runs in kpc and Myr only, so
velocities cross the module boundary through the factors below.
"""

from dataclasses import dataclass

KPC_IN_KM = 3.0856775814913673e16
MYR_IN_S = 3.15576e13  # Julian megayear

# 1 kpc/Myr expressed in km/s (~977.79)
KMS_PER_KPC_MYR = KPC_IN_KM / MYR_IN_S
KPC_MYR_PER_KMS = 1.0 / KMS_PER_KPC_MYR


@dataclass(frozen=True)
class UnitConstants:
    """Conversion bundle, exposed so alternate unit choices stay auditable."""

    kpc_per_myr_in_kms: float = KMS_PER_KPC_MYR


def kms_to_internal(v_kms):
    """km/s -> kpc/Myr (scalar or array)."""
    return v_kms * KPC_MYR_PER_KMS


def internal_to_kms(v_int):
    """kpc/Myr -> km/s (scalar or array)."""
    return v_int * KMS_PER_KPC_MYR
