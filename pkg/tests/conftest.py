import numpy as np
import pytest

from bregproj import legendre as lg

KIND_NAMES = [
    "boltzmann_shannon",
    "burg",
    "fermi_dirac",
    "hellinger",
    "power",
    "tsallis",
    "p_norm",
    "quadratic",
]


def make_function(name: str, dim: int, rng=None) -> lg.LegendreFunction:
    if name == "power":
        return lg.power(0.5, dim)
    if name == "tsallis":
        return lg.tsallis(0.3, dim)
    if name == "p_norm":
        return lg.p_norm(1.5, dim)
    if name == "quadratic":
        rng = rng or np.random.default_rng(20240311)
        Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        d = rng.uniform(0.5, 2.0, dim)
        return lg.quadratic((Q * d) @ Q.T)
    return getattr(lg, name)(dim)


def interior_point(f: lg.LegendreFunction, rng) -> np.ndarray:
    kind = f.kind
    if kind in ("boltzmann_shannon", "burg", "power", "tsallis"):
        return rng.uniform(0.15, 2.5, f.dim)
    if kind == "fermi_dirac":
        return rng.uniform(0.05, 0.95, f.dim)
    if kind == "hellinger":
        return rng.uniform(-0.9, 0.9, f.dim)
    return rng.normal(size=f.dim)


def conjugate_point(f: lg.LegendreFunction, rng) -> np.ndarray:
    """Point of int(dom phi*), kept away from boundaries and (for the
    p-norm) away from the origin where the conjugate Hessian is not smooth."""
    kind = f.kind
    if kind == "burg":
        return -rng.uniform(0.3, 3.0, f.dim)
    if kind in ("power", "tsallis"):
        hi = f.conj_bounds()[1]
        return hi - rng.uniform(0.3, 3.0, f.dim)
    if kind == "p_norm":
        return rng.uniform(0.2, 2.0, f.dim) * rng.choice([-1.0, 1.0], f.dim)
    return rng.normal(size=f.dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
