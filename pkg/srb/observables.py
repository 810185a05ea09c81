from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from dynamics.map_core import MapParams, step

Observable = Callable[[np.ndarray], np.ndarray]

# name -> (function, Hoelder exponent recorded as metadata)
CATALOG: Dict[str, tuple] = {
    "identity": (lambda x: x, 1.0),
    "cos_pi": (lambda x: np.cos(np.pi * x), 1.0),
    "abs": (lambda x: np.abs(x), 1.0),
    "indicator_half": (lambda x: (x >= 0.0).astype(np.float64), 1.0),
}
# built from the map itself: psi o f - psi with psi = identity
COBOUNDARY = "coboundary_identity"


def observable_names():
    return sorted(CATALOG) + [COBOUNDARY]


def resolve(name: str, params: Optional[MapParams] = None) -> Observable:
    if name in CATALOG:
        return CATALOG[name][0]
    if name == COBOUNDARY:
        if params is None:
            raise ValueError(f"{COBOUNDARY} needs the map parameters")
        return lambda x: step(params, x) - x
    raise ValueError(f"unknown observable {name!r}; choose from {', '.join(observable_names())}")


def holder_exponent(name: str) -> float:
    return CATALOG[name][1] if name in CATALOG else 1.0


@dataclass(frozen=True)
class ObservablePair:
    phi: str
    psi: str
    holder_exponent: float = 1.0

    def __post_init__(self):
        for name in (self.phi, self.psi):
            if name not in CATALOG and name != COBOUNDARY:
                raise ValueError(f"unknown observable {name!r}")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder_exponent must be in (0, 1]")

    @classmethod
    def of(cls, phi: str, psi: str) -> "ObservablePair":
        return cls(phi, psi, min(holder_exponent(phi), holder_exponent(psi)))
