"""Set-control sequences: cyclic, greedy, i.i.d. random, adaptive random.

Randomness comes from counter-based Philox streams keyed by a 64-bit seed,
so identical seeds reproduce identical index sequences and batch trials can
run on independent derived streams regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ControlScheme",
    "ControlState",
    "next_index",
    "adaptive_probabilities",
    "beta_factor",
    "make_rng",
    "derive_seeds",
]

KINDS = ("cyclic", "greedy", "random", "adaptive")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seeds(seed: int, n: int) -> list[int]:
    """Per-trial seeds: trial 0 keeps the root seed (so a one-trial batch
    reproduces a direct solve), later trials use spawned child streams."""
    if n < 1:
        return []
    children = np.random.SeedSequence(int(seed)).spawn(n)
    out = [int(seed)]
    for child in children[1:]:
        out.append(int(child.generate_state(1, np.uint64)[0]))
    return out


def _check_mu(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError("mu must be a nonempty probability vector")
    if np.any(mu < 0):
        raise ValueError("mu entries must be nonnegative")
    if abs(mu.sum() - 1.0) > 1e-12:
        raise ValueError("mu must sum to 1 within 1e-12")
    if not np.any(mu > 0):
        raise ValueError("mu must put mass somewhere")
    return mu


@dataclass(frozen=True)
class ControlScheme:
    """Policy choosing which constraint set to project onto at each step."""

    kind: str
    mu: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown control kind {self.kind!r}")
        if self.kind in ("random", "adaptive"):
            if self.mu is None:
                raise ValueError(f"{self.kind} control needs a probability vector")
            object.__setattr__(self, "mu", _check_mu(self.mu))
        elif self.mu is not None:
            raise ValueError(f"{self.kind} control takes no probability vector")

    # -- constructors ------------------------------------------------------
    @classmethod
    def cyclic(cls) -> "ControlScheme":
        return cls("cyclic")

    @classmethod
    def greedy(cls) -> "ControlScheme":
        return cls("greedy")

    @classmethod
    def random(cls, mu, seed: int = 0) -> "ControlScheme":
        return cls("random", mu, seed)

    @classmethod
    def adaptive(cls, mu, seed: int = 0) -> "ControlScheme":
        return cls("adaptive", mu, seed)

    @classmethod
    def uniform(cls, kind: str, m: int, seed: int = 0) -> "ControlScheme":
        """Scheme of the given kind; random/adaptive get uniform weights."""
        if kind in ("random", "adaptive"):
            return cls(kind, np.full(m, 1.0 / m), seed)
        return cls(kind)

    @property
    def needs_distances(self) -> bool:
        return self.kind in ("greedy", "adaptive")

    def reseeded(self, seed: int) -> "ControlScheme":
        return ControlScheme(self.kind, self.mu, int(seed))

    def to_json(self) -> dict:
        out = {"control": self.kind, "seed": int(self.seed)}
        if self.mu is not None:
            out["mu"] = self.mu.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ControlScheme":
        return cls(obj["control"], obj.get("mu"), int(obj.get("seed", 0)))


@dataclass
class ControlState:
    """Single-owner mutable per solver run: step counter plus RNG stream."""

    m: int
    k: int = 0
    rng: np.random.Generator | None = None
    last_distances: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def for_scheme(cls, scheme: ControlScheme, m: int) -> "ControlState":
        rng = make_rng(scheme.seed) if scheme.kind in ("random", "adaptive") else None
        return cls(m=m, rng=rng)


def adaptive_probabilities(mu, distances) -> np.ndarray:
    """Distance-proportional reweighting of mu; equal to mu on feasibility.

    p_i is proportional to mu_i * d_i when some weighted distance is
    positive, and falls back to mu itself when all distances vanish.
    """
    mu = np.asarray(mu, dtype=float)
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    weighted = mu * d
    total = weighted.sum()
    if total <= 0.0:
        return mu.copy()
    return weighted / total


def beta_factor(mu, distances) -> float:
    """Variance factor 1 + Var[d_xi / mean] for xi ~ mu; 1 on feasibility.

    Equals the second moment of d_xi / E[d_xi], hence always >= 1.
    """
    mu = np.asarray(mu, dtype=float)
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    mean = float(mu @ d)
    if mean <= 0.0:
        return 1.0
    r = d / mean
    return float(mu @ (r * r))


def _sample(rng: np.random.Generator, p: np.ndarray) -> int:
    """Inverse-CDF categorical draw; zero-probability cells are skipped."""
    cum = np.cumsum(p)
    cum[-1] = 1.0
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, p.size - 1)


def next_index(scheme: ControlScheme, state: ControlState,
               distances=None) -> int:
    """Next set index under the scheme; advances the step counter.

    Greedy returns the smallest index attaining the maximal distance;
    cyclic walks k mod m; random samples mu; adaptive samples the
    distance-reweighted mu.
    """
    if scheme.needs_distances:
        if distances is None:
            raise ValueError(f"{scheme.kind} control requires per-set distances")
        d = np.asarray(distances, dtype=float)
        if d.shape != (state.m,):
            raise ValueError("distances must have one entry per set")
        state.last_distances = d

    if scheme.kind == "cyclic":
        idx = state.k % state.m
    elif scheme.kind == "greedy":
        idx = int(np.argmax(d))
    elif scheme.kind == "random":
        idx = _sample(state.rng, scheme.mu)
    else:  # adaptive
        idx = _sample(state.rng, adaptive_probabilities(scheme.mu, d))
    state.k += 1
    return idx
