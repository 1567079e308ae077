"""
Numerical kernels shared by the models and the simulator.
Bracketed root-finding, adaptive quadrature with kink breakpoints, finite
differences and a seeded, splittable random source.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Optional, Tuple, Union

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize

from config.config import DEFAULT_ABS_TOL, DEFAULT_MAX_ITER, DEFAULT_REL_TOL
from helpers.errors import BadRateError, InvalidParameterError, MaxIterError, NoBracketError
from helpers.observability import SolverCallTracker

logger = logging.getLogger(__name__)

_UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class Tolerance:
    """Convergence settings for bisect and integrate."""

    abs_tol: float = DEFAULT_ABS_TOL
    rel_tol: float = DEFAULT_REL_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise InvalidParameterError(f"abs_tol must be > 0, got {self.abs_tol}")
        if not self.rel_tol >= 0:
            raise InvalidParameterError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.max_iter < 1:
            raise InvalidParameterError(f"max_iter must be >= 1, got {self.max_iter}")


DEFAULT_TOLERANCE = Tolerance()


@dataclass(frozen=True)
class RandomSource:
    """
    Seeded random stream.

    Identical (seed, stream_id, path) always reproduces the same variates.
    Parallel runs use distinct stream_ids; chunked work inside one run uses child().
    """

    seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not 0 <= int(value) <= _UINT64_MAX:
                raise InvalidParameterError(f"{name} must be a 64-bit unsigned integer, got {value}")

    @cached_property
    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), *self.path))
        return np.random.Generator(np.random.PCG64(sequence))

    def fresh(self) -> "RandomSource":
        """Same stream rewound to its first variate; the generator is cached per instance."""
        return replace(self)

    def child(self, index: int) -> "RandomSource":
        """Deterministic sub-stream, independent of how many children are drawn."""
        return RandomSource(seed=self.seed, stream_id=self.stream_id, path=self.path + (int(index),))

    def to_dict(self) -> dict:
        return {"seed": int(self.seed), "stream_id": int(self.stream_id), "path": list(self.path)}


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> float:
    """
    Find a root of f in [lo, hi] by bisection.

    Args:
        f: Continuous function on [lo, hi]
        lo: Left end of the bracket
        hi: Right end of the bracket
        tol: Convergence settings

    Returns:
        x with bracket width <= abs_tol (or an exact zero)

    Raises:
        NoBracketError: If f(lo) and f(hi) share a sign
        MaxIterError: If the bracket does not shrink within max_iter halvings
    """
    if lo > hi:
        lo, hi = hi, lo
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoBracketError(f"f({lo})={f_lo:.6g} and f({hi})={f_hi:.6g} have the same sign")

    # scipy requires rtol >= 4*eps
    rtol = max(tol.rel_tol, 4 * np.finfo(float).eps)
    try:
        root, result = optimize.bisect(
            f, lo, hi, xtol=tol.abs_tol, rtol=rtol, maxiter=tol.max_iter, full_output=True, disp=False
        )
    except RuntimeError as e:
        raise MaxIterError(f"bisection on [{lo}, {hi}] failed: {e}")

    SolverCallTracker.record("bisect", iterations=result.iterations, converged=result.converged)
    if not result.converged:
        raise MaxIterError(f"bisection on [{lo}, {hi}] did not converge in {tol.max_iter} iterations")
    return float(root)


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
    points: Optional[Iterable[float]] = None,
) -> float:
    """
    Adaptive quadrature of f over [a, b].

    Args:
        f: Bounded integrand
        a: Lower limit
        b: Upper limit (a <= b)
        tol: Error target max(abs_tol, rel_tol*|result|) and subinterval budget
        points: Kink abscissae; only those strictly inside (a, b) are used

    Returns:
        Integral estimate

    Raises:
        MaxIterError: If the adaptive scheme does not reach the tolerance
    """
    if b < a:
        raise InvalidParameterError(f"integrate needs a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0

    breaks = None
    if points is not None:
        inner = sorted({float(x) for x in points if a < x < b})
        breaks = inner or None

    # a fourth element carries the message when quad did not converge
    result = sp_integrate.quad(
        f, a, b, epsabs=tol.abs_tol, epsrel=tol.rel_tol, limit=tol.max_iter, points=breaks, full_output=1
    )
    value, info = result[0], result[2]
    converged = len(result) < 4
    SolverCallTracker.record("integrate", iterations=info["neval"], converged=converged)
    if not converged:
        raise MaxIterError(f"quadrature on [{a}, {b}] did not converge: {result[3]}")
    return float(value)


def central_difference(f: Callable[[float], float], x: float, step: float = 1e-5) -> float:
    """Symmetric first derivative estimate."""
    return (f(x + step) - f(x - step)) / (2.0 * step)


def sample_exponential(
    rs: RandomSource,
    rate: float,
    size: Union[None, int, Tuple[int, ...]] = None,
) -> Union[float, np.ndarray]:
    """
    Draw exponential variates with the given rate (mean 1/rate).

    Raises:
        BadRateError: If rate <= 0
    """
    if not (rate > 0) or math.isinf(rate):
        raise BadRateError(f"rate must be a positive finite number, got {rate}")
    draws = rs.generator.exponential(scale=1.0 / rate, size=size)
    if size is None:
        return float(draws)
    return draws


def ks_distance(x: np.ndarray, empirical: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Largest absolute gap between an empirical CDF sampled at x and a reference CDF."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.asarray(empirical, dtype=float) - cdf(x))))
