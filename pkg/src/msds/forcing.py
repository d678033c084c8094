"""Deterministic right-hand sides f(x, y)."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class SineForcing:
    """f = sin(k pi x + phase1) cos(l pi y + phase2)."""

    k: float
    l: float
    phase1: float = 0.0
    phase2: float = 0.0

    def __call__(self, x, y):
        return np.sin(self.k * np.pi * x + self.phase1) * np.cos(self.l * np.pi * y + self.phase2)

    def descriptor(self):
        return {"kind": "sine", "k": self.k, "l": self.l, "phase1": self.phase1, "phase2": self.phase2}


@dataclass(frozen=True)
class ZeroForcing:
    def __call__(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def descriptor(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class CombinedForcing:
    """Linear combination sum_i weights[i] * members[i]."""

    weights: tuple
    members: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.members):
            raise InvalidArgumentError("weights and members differ in length")

    def __call__(self, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for w, f in zip(self.weights, self.members):
            out = out + w * f(x, y)
        return out

    def descriptor(self):
        return {
            "kind": "combined",
            "weights": [float(w) for w in self.weights],
            "members": [m.descriptor() for m in self.members],
        }


# forcing used for the single-solve figures and the eigenvalue study
SECTION_FORCING = SineForcing(2.3, 1.5, 0.2, -0.3)


def random_forcings(n, seed, k_range=(0.0, 4.0), phase_range=(0.0, 1.0)):
    """``n`` sine forcings with k, l ~ U[k_range] and phases ~ U[phase_range]."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(int(n)):
        k, l = rng.uniform(*k_range, size=2)
        p1, p2 = rng.uniform(*phase_range, size=2)
        out.append(SineForcing(float(k), float(l), float(p1), float(p2)))
    return out


def from_descriptor(d):
    kind = d.get("kind", "sine")
    if kind == "sine":
        return SineForcing(float(d["k"]), float(d["l"]), float(d.get("phase1", 0.0)), float(d.get("phase2", 0.0)))
    if kind == "zero":
        return ZeroForcing()
    if kind == "combined":
        return CombinedForcing(tuple(d["weights"]), tuple(from_descriptor(m) for m in d["members"]))
    raise InvalidArgumentError(f"unknown forcing kind {kind!r}")
