"""Independent random streams keyed by ``(role, replicate, size)``.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed,
spawn_key=(role, replicate, size))``, so streams never overlap and a
stream's draws do not depend on which other streams exist or on the order
in which workers request them.
"""

import numpy as np

from .errors import InvalidInputError

ROLE_Z = 0
ROLE_Y = 1
ROLE_POSTERIOR = 2
ROLE_SPEC = 3

ROLE_NAMES = {ROLE_Z: "z", ROLE_Y: "y", ROLE_POSTERIOR: "posterior", ROLE_SPEC: "spec"}

_U64 = 2**64


def check_seed(seed) -> int:
    """Validate ``seed`` as an integer in ``[0, 2**64)``."""
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise InvalidInputError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise InvalidInputError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def stream(seed, role: int, replicate: int = 0, size: int = 0) -> np.random.Generator:
    """Generator for one ``(role, replicate, size)`` stream of ``seed``."""
    seed = check_seed(seed)
    if role not in ROLE_NAMES:
        raise InvalidInputError(f"unknown stream role {role!r}")
    if replicate < 0 or size < 0:
        raise InvalidInputError("replicate and size must be nonnegative")
    ss = np.random.SeedSequence(seed, spawn_key=(int(role), int(replicate), int(size)))
    return np.random.Generator(np.random.PCG64(ss))


def stream_id(role: int, replicate: int = 0, size: int = 0) -> str:
    """Readable stream label recorded in run metadata."""
    return f"{ROLE_NAMES[role]}/{replicate}/{size}"
