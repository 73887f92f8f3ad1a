"""Sketched affine families for a base linear system {Ax = b}.

Each sketch matrix S_i turns the full system into the smaller set
C_i = {x : S_i^T A x = S_i^T b}; solving the family from a start point
with vanishing gradient converges to the generator-minimal solution of
the full system.  Gaussian sketches are drawn once at construction and
frozen, so the family is deterministic afterwards.
"""

from __future__ import annotations

import numpy as np

from .controls import make_rng
from .geometry import GeneralAffineSet, Hyperplane

__all__ = ["SketchFamily"]


class SketchFamily:
    """Immutable family of sketching operators over a base system."""

    def __init__(self, kind: str, A, b, sketches: list[np.ndarray]):
        A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(b, dtype=float)).copy()
        if A.shape[0] != b.shape[0]:
            raise ValueError("row counts of A and b differ")
        for i, S in enumerate(sketches):
            if not np.any(S.T @ A):
                raise ValueError(f"sketched operator {i} is zero")
        A.flags.writeable = False
        b.flags.writeable = False
        self.kind = kind
        self.A = A
        self.b = b
        self._sketches = [np.asarray(S, dtype=float) for S in sketches]
        for S in self._sketches:
            S.flags.writeable = False

    # -- constructors ------------------------------------------------------
    @classmethod
    def rows(cls, A, b) -> "SketchFamily":
        """One single-row sketch per equation (Kaczmarz-style)."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m = A.shape[0]
        eye = np.eye(m)
        return cls("rows", A, b, [eye[:, [i]] for i in range(m)])

    @classmethod
    def row_blocks(cls, A, b, tau: int) -> "SketchFamily":
        """Contiguous row blocks of size tau (last block may be smaller)."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        m = A.shape[0]
        if tau < 1:
            raise ValueError("block size must be positive")
        eye = np.eye(m)
        sketches = [eye[:, list(range(start, min(start + tau, m)))]
                    for start in range(0, m, tau)]
        return cls("row_blocks", A, b, sketches)

    @classmethod
    def gaussian(cls, A, b, count: int, tau: int, seed: int = 0) -> "SketchFamily":
        """`count` standard-normal m-by-tau sketches, frozen at construction."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if count < 1 or tau < 1:
            raise ValueError("count and width must be positive")
        rng = make_rng(seed)
        sketches = [rng.normal(size=(A.shape[0], tau)) for _ in range(count)]
        return cls("gaussian", A, b, sketches)

    # -- accessors ----------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self._sketches)

    def sketch_matrices(self) -> list[np.ndarray]:
        return list(self._sketches)

    def build_sets(self) -> list:
        """Constraint sets of the sketched systems, labelled by index.

        Row sketches yield hyperplanes (enabling the scalar dual path);
        wider sketches yield general affine sets.
        """
        sets = []
        for i, S in enumerate(self._sketches):
            As = S.T @ self.A
            bs = S.T @ self.b
            if As.shape[0] == 1:
                sets.append(Hyperplane(As[0], float(bs[0]), label=i))
            else:
                sets.append(GeneralAffineSet(As, bs, label=i))
        return sets

    def to_json(self) -> dict:
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist(),
                "sketches": [S.tolist() for S in self._sketches]}
