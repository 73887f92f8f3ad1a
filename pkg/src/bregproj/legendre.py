"""Legendre generators and their conjugate calculus.

Each generator knows its value, gradient, conjugate value/gradient/Hessian,
and domain membership tests.  The gradient maps the interior of the domain
bijectively onto the interior of the conjugate domain, and the conjugate
gradient is its inverse; every conjugate domain here is open.

Values are extended-real: evaluating outside the domain returns ``+inf``
(entropies use the convention 0*log 0 = 0 at the boundary).  Gradients and
conjugate maps insist on strict interiority and raise :class:`DomainError`
otherwise; callers that need slack must clamp explicitly via
:meth:`LegendreFunction.clamp_interior`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, xlogy

__all__ = [
    "DomainError",
    "LegendreFunction",
    "boltzmann_shannon",
    "burg",
    "fermi_dirac",
    "hellinger",
    "power",
    "tsallis",
    "p_norm",
    "quadratic",
    "from_json",
]

INF = float("inf")


class DomainError(ValueError):
    """Argument lies outside the region where the requested map is defined."""


def _vec(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got shape {x.shape}")
    return x


class LegendreFunction:
    """Strictly convex generator phi with conjugate calculus.

    Instances are immutable after construction and safe to share across
    threads; all operations are pure.
    """

    kind: str = ""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = int(dim)

    # -- core maps -------------------------------------------------------
    def value(self, x) -> float:
        """phi(x); +inf outside the domain."""
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        """Gradient of phi; requires x in the interior of the domain."""
        raise NotImplementedError

    def conj_value(self, y) -> float:
        """Conjugate phi*(y); raises DomainError outside its (open) domain."""
        raise NotImplementedError

    def conj_grad(self, y) -> np.ndarray:
        """Gradient of phi*; the inverse map of :meth:`grad`."""
        raise NotImplementedError

    def conj_hess(self, y) -> np.ndarray:
        """Hessian of phi*: a diagonal vector for separable kinds, a dense
        matrix for the quadratic kind.  Positive semidefinite on the
        conjugate domain."""
        raise NotImplementedError

    # -- domains ---------------------------------------------------------
    def in_domain(self, x) -> bool:
        raise NotImplementedError

    def in_interior(self, x) -> bool:
        """Strict-inequality interior test, no tolerance."""
        raise NotImplementedError

    def in_conj_domain(self, y) -> bool:
        """Membership in dom phi*, which is open for every kind here."""
        raise NotImplementedError

    def conj_bounds(self) -> tuple[float, float]:
        """Coordinatewise open interval (lo, hi) describing dom phi*."""
        return (-INF, INF)

    def grad_zero(self) -> np.ndarray | None:
        """The point with vanishing gradient, or None if 0 not in dom phi*."""
        return None

    def clamp_interior(self, x, floor: float = 1e-300) -> np.ndarray:
        """Push x onto the interior of the domain, at distance >= `floor`
        from the boundary.  The math kernel itself never clamps."""
        return np.asarray(x, dtype=float).copy()

    def pairwise_divergence(self, x: np.ndarray, y: np.ndarray) -> float | None:
        """Cancellation-free divergence D(x, y) where the kind has one.

        The generic formula phi(x) - phi(y) - <x - y, grad(y)> loses all
        precision once D is below eps * |phi|; kinds that admit a stable
        rewriting override this.  None means "use the generic formula".
        Callers guarantee y interior and x in the domain.
        """
        return None

    # -- serialization ---------------------------------------------------
    def params(self) -> dict:
        return {}

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params(), "dim": self.dim}

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        ps = ", ".join(f"{k}={v}" for k, v in self.params().items() if k != "B")
        inner = f"{ps}, dim={self.dim}" if ps else f"dim={self.dim}"
        return f"{type(self).__name__}({inner})"


class _Separable(LegendreFunction):
    """Coordinatewise generator phi(x) = sum_i phi(x_i)."""

    # scalar hooks (vectorized over numpy arrays)
    def _phi(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _dphi(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _conj(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _dconj(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _d2conj(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _in_dom(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _in_int(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _in_conj(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.conj_bounds()
        return (u > lo) & (u < hi)

    def value(self, x) -> float:
        x = _vec(x, self.dim)
        if not bool(np.all(self._in_dom(x))):
            return INF
        return float(np.sum(self._phi(x)))

    def grad(self, x) -> np.ndarray:
        x = _vec(x, self.dim)
        if not bool(np.all(self._in_int(x))):
            raise DomainError(f"{self.kind}: point not in the interior of dom phi")
        return self._dphi(x)

    def conj_value(self, y) -> float:
        y = _vec(y, self.dim)
        if not bool(np.all(self._in_conj(y))):
            raise DomainError(f"{self.kind}: point not in dom phi*")
        return float(np.sum(self._conj(y)))

    def conj_grad(self, y) -> np.ndarray:
        y = _vec(y, self.dim)
        if not bool(np.all(self._in_conj(y))):
            raise DomainError(f"{self.kind}: point not in dom phi*")
        return self._dconj(y)

    def conj_hess(self, y) -> np.ndarray:
        y = _vec(y, self.dim)
        if not bool(np.all(self._in_conj(y))):
            raise DomainError(f"{self.kind}: point not in dom phi*")
        return self._d2conj(y)

    def in_domain(self, x) -> bool:
        return bool(np.all(self._in_dom(_vec(x, self.dim))))

    def in_interior(self, x) -> bool:
        return bool(np.all(self._in_int(_vec(x, self.dim))))

    def in_conj_domain(self, y) -> bool:
        return bool(np.all(self._in_conj(_vec(y, self.dim))))


def _h1p(delta: np.ndarray) -> np.ndarray:
    """delta - log1p(delta), the convexity gap of the logarithm at 1.

    Accurate for small delta: log1p is exact to an ulp and the subtraction
    of nearby doubles is exact, so the result keeps full relative accuracy
    even when it is ~delta^2/2.
    """
    return delta - np.log1p(delta)


class BoltzmannShannon(_Separable):
    """phi(t) = t log t - t on t >= 0; conjugate exp(y) on all of R."""

    kind = "boltzmann_shannon"

    def _phi(self, t):
        return xlogy(t, t) - t

    def pairwise_divergence(self, x, y):
        # sum x log(x/y) - x + y  ==  sum x h((y-x)/x), plus y on {x = 0}
        pos = x > 0.0
        total = float(np.sum(y[~pos]))
        xp, yp = x[pos], y[pos]
        total += float(np.sum(xp * _h1p((yp - xp) / xp)))
        return total

    def _dphi(self, t):
        return np.log(t)

    def _conj(self, u):
        return np.exp(u)

    def _dconj(self, u):
        return np.exp(u)

    def _d2conj(self, u):
        return np.exp(u)

    def _in_dom(self, t):
        return t >= 0.0

    def _in_int(self, t):
        return t > 0.0

    def grad_zero(self):
        return np.ones(self.dim)

    def clamp_interior(self, x, floor: float = 1e-300):
        return np.maximum(np.asarray(x, dtype=float), floor)


class Burg(_Separable):
    """phi(t) = -log t on t > 0; conjugate -1 - log(-y) on y < 0."""

    kind = "burg"

    def _phi(self, t):
        return -np.log(t)

    def pairwise_divergence(self, x, y):
        # sum log(y/x) + x/y - 1  ==  sum h((x-y)/y)
        return float(np.sum(_h1p((x - y) / y)))

    def _dphi(self, t):
        return -1.0 / t

    def _conj(self, u):
        return -1.0 - np.log(-u)

    def _dconj(self, u):
        return -1.0 / u

    def _d2conj(self, u):
        return 1.0 / (u * u)

    def _in_dom(self, t):
        return t > 0.0

    _in_int = _in_dom

    def conj_bounds(self):
        return (-INF, 0.0)

    def clamp_interior(self, x, floor: float = 1e-300):
        return np.maximum(np.asarray(x, dtype=float), floor)


class FermiDirac(_Separable):
    """phi(t) = t log t + (1-t) log(1-t) on [0,1]; conjugate log(1+e^y)."""

    kind = "fermi_dirac"

    def _phi(self, t):
        return xlogy(t, t) + xlogy(1.0 - t, 1.0 - t)

    def _dphi(self, t):
        return np.log(t) - np.log1p(-t)

    def _conj(self, u):
        return np.logaddexp(0.0, u)

    def _dconj(self, u):
        return expit(u)

    def _d2conj(self, u):
        s = expit(u)
        return s * (1.0 - s)

    def _in_dom(self, t):
        return (t >= 0.0) & (t <= 1.0)

    def _in_int(self, t):
        return (t > 0.0) & (t < 1.0)

    def grad_zero(self):
        return np.full(self.dim, 0.5)

    def clamp_interior(self, x, floor: float = 1e-300):
        return np.clip(np.asarray(x, dtype=float), floor, 1.0 - 1e-16)


class Hellinger(_Separable):
    """phi(t) = -sqrt(1 - t^2) on [-1,1]; conjugate sqrt(1 + y^2)."""

    kind = "hellinger"

    def _phi(self, t):
        return -np.sqrt(1.0 - t * t)

    def _dphi(self, t):
        return t / np.sqrt(1.0 - t * t)

    def _conj(self, u):
        return np.hypot(1.0, u)

    def _dconj(self, u):
        return u / np.hypot(1.0, u)

    def _d2conj(self, u):
        # d/du [u (1+u^2)^{-1/2}] = (1+u^2)^{-3/2}
        return np.hypot(1.0, u) ** -3

    def _in_dom(self, t):
        return np.abs(t) <= 1.0

    def _in_int(self, t):
        return np.abs(t) < 1.0

    def grad_zero(self):
        return np.zeros(self.dim)

    def clamp_interior(self, x, floor: float = 1e-300):
        lim = 1.0 - 1e-16
        return np.clip(np.asarray(x, dtype=float), -lim, lim)


class PositivePower(_Separable):
    """phi(t) = (t^beta - beta t + beta - 1)/(beta (beta-1)) on t >= 0,
    for beta in (0,1); conjugate domain is y < 1/(1-beta)."""

    kind = "power"

    def __init__(self, beta: float, dim: int):
        if not 0.0 < beta < 1.0:
            raise ValueError("power exponent beta must lie in (0, 1)")
        super().__init__(dim)
        self.beta = float(beta)

    def params(self):
        return {"beta": self.beta}

    def _phi(self, t):
        b = self.beta
        return (t**b - b * t + b - 1.0) / (b * (b - 1.0))

    def _dphi(self, t):
        b = self.beta
        return (1.0 - t ** (b - 1.0)) / (1.0 - b)

    def _s(self, u):
        return 1.0 - (1.0 - self.beta) * u

    def _conj(self, u):
        b = self.beta
        return (self._s(u) ** (b / (b - 1.0)) - 1.0) / b

    def _dconj(self, u):
        b = self.beta
        return self._s(u) ** (1.0 / (b - 1.0))

    def _d2conj(self, u):
        b = self.beta
        return self._s(u) ** ((2.0 - b) / (b - 1.0))

    def _in_dom(self, t):
        return t >= 0.0

    def _in_int(self, t):
        return t > 0.0

    def conj_bounds(self):
        return (-INF, 1.0 / (1.0 - self.beta))

    def grad_zero(self):
        return np.ones(self.dim)

    def clamp_interior(self, x, floor: float = 1e-300):
        return np.maximum(np.asarray(x, dtype=float), floor)


class Tsallis(_Separable):
    """phi(t) = (t^q - t)/(q - 1) on t >= 0, for q in (0,1);
    conjugate domain is y < 1/(1-q)."""

    kind = "tsallis"

    def __init__(self, q: float, dim: int):
        if not 0.0 < q < 1.0:
            raise ValueError("Tsallis exponent q must lie in (0, 1)")
        super().__init__(dim)
        self.q = float(q)

    def params(self):
        return {"q": self.q}

    def _phi(self, t):
        q = self.q
        return (t**q - t) / (q - 1.0)

    def _dphi(self, t):
        q = self.q
        return (q * t ** (q - 1.0) - 1.0) / (q - 1.0)

    def _s(self, u):
        return (1.0 - (1.0 - self.q) * u) / self.q

    def _conj(self, u):
        q = self.q
        return self._s(u) ** (q / (q - 1.0))

    def _dconj(self, u):
        q = self.q
        return self._s(u) ** (1.0 / (q - 1.0))

    def _d2conj(self, u):
        q = self.q
        return self._s(u) ** ((2.0 - q) / (q - 1.0)) / q

    def _in_dom(self, t):
        return t >= 0.0

    def _in_int(self, t):
        return t > 0.0

    def conj_bounds(self):
        return (-INF, 1.0 / (1.0 - self.q))

    def grad_zero(self):
        return np.full(self.dim, self.q ** (1.0 / (1.0 - self.q)))

    def clamp_interior(self, x, floor: float = 1e-300):
        return np.maximum(np.asarray(x, dtype=float), floor)


class PNorm(_Separable):
    """phi(t) = |t|^p / p on all of R, for p in (1,2]; conjugate |y|^q / q
    with 1/p + 1/q = 1."""

    kind = "p_norm"

    def __init__(self, p: float, dim: int):
        if not 1.0 < p <= 2.0:
            raise ValueError("p-norm exponent must lie in (1, 2]")
        super().__init__(dim)
        self.p = float(p)
        self.q = p / (p - 1.0)

    def params(self):
        return {"p": self.p}

    def _phi(self, t):
        return np.abs(t) ** self.p / self.p

    def _dphi(self, t):
        return np.sign(t) * np.abs(t) ** (self.p - 1.0)

    def _conj(self, u):
        return np.abs(u) ** self.q / self.q

    def _dconj(self, u):
        return np.sign(u) * np.abs(u) ** (self.q - 1.0)

    def _d2conj(self, u):
        return (self.q - 1.0) * np.abs(u) ** (self.q - 2.0)

    def _in_dom(self, t):
        return np.isfinite(t)

    _in_int = _in_dom

    def grad_zero(self):
        return np.zeros(self.dim)


class Quadratic(LegendreFunction):
    """phi(x) = 0.5 <Bx, x> for a symmetric positive-definite weight B."""

    kind = "quadratic"

    def __init__(self, B):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("quadratic weight must be a square matrix")
        if not np.allclose(B, B.T, rtol=1e-12, atol=1e-12):
            raise ValueError("quadratic weight must be symmetric")
        super().__init__(B.shape[0])
        try:
            self._chol = np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise ValueError("quadratic weight must be positive definite") from exc
        self.B = B.copy()
        self.B.flags.writeable = False
        self._Binv = self._solve(np.eye(self.dim))
        self._Binv = 0.5 * (self._Binv + self._Binv.T)
        self._Binv.flags.writeable = False

    def _solve(self, rhs):
        z = np.linalg.solve(self._chol, rhs)
        return np.linalg.solve(self._chol.T, z)

    def params(self):
        return {"B": self.B.tolist()}

    def value(self, x) -> float:
        x = _vec(x, self.dim)
        return float(0.5 * x @ (self.B @ x))

    def grad(self, x) -> np.ndarray:
        return self.B @ _vec(x, self.dim)

    def conj_value(self, y) -> float:
        y = _vec(y, self.dim)
        return float(0.5 * y @ (self._Binv @ y))

    def conj_grad(self, y) -> np.ndarray:
        return self._Binv @ _vec(y, self.dim)

    def conj_hess(self, y) -> np.ndarray:
        _vec(y, self.dim)
        return self._Binv

    def pairwise_divergence(self, x, y):
        d = x - y
        return float(0.5 * d @ (self.B @ d))

    def in_domain(self, x) -> bool:
        return bool(np.all(np.isfinite(_vec(x, self.dim))))

    in_interior = in_domain

    def in_conj_domain(self, y) -> bool:
        return bool(np.all(np.isfinite(_vec(y, self.dim))))

    def grad_zero(self):
        return np.zeros(self.dim)


# -- factories -----------------------------------------------------------

def boltzmann_shannon(dim: int) -> BoltzmannShannon:
    return BoltzmannShannon(dim)


def burg(dim: int) -> Burg:
    return Burg(dim)


def fermi_dirac(dim: int) -> FermiDirac:
    return FermiDirac(dim)


def hellinger(dim: int) -> Hellinger:
    return Hellinger(dim)


def power(beta: float, dim: int) -> PositivePower:
    return PositivePower(beta, dim)


def tsallis(q: float, dim: int) -> Tsallis:
    return Tsallis(q, dim)


def p_norm(p: float, dim: int) -> PNorm:
    return PNorm(p, dim)


def quadratic(B) -> Quadratic:
    return Quadratic(B)


def from_json(obj: dict) -> LegendreFunction:
    """Rebuild a generator from {"kind": ..., "params": {...}, "dim": n}."""
    kind = obj["kind"]
    params = obj.get("params", {}) or {}
    dim = obj.get("dim")
    if kind == "quadratic":
        return Quadratic(params["B"])
    if dim is None:
        raise ValueError("dim is required for separable kinds")
    builders = {
        "boltzmann_shannon": lambda: BoltzmannShannon(dim),
        "burg": lambda: Burg(dim),
        "fermi_dirac": lambda: FermiDirac(dim),
        "hellinger": lambda: Hellinger(dim),
        "power": lambda: PositivePower(params["beta"], dim),
        "tsallis": lambda: Tsallis(params["q"], dim),
        "p_norm": lambda: PNorm(params["p"], dim),
    }
    try:
        return builders[kind]()
    except KeyError as exc:
        raise ValueError(f"unknown Legendre kind {kind!r}") from exc
