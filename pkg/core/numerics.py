"""
Deterministic numeric kernel.

Probability transforms, divergences, categorical sampling and the
central-difference oracle that every hand-derived gradient is checked
against. Everything works on 64-bit float numpy arrays.
"""

import math
from collections.abc import Callable, Sequence

import numpy as np
import numpy.typing as npt

from core.exceptions import (
    DivergenceUndefinedError,
    InfiniteLossError,
    InvalidArgumentError,
    NonFiniteLossError,
)

FloatArray = npt.NDArray[np.float64]

PROB_TOLERANCE = 1e-9


def as_float_array(values: Sequence[float] | FloatArray) -> FloatArray:
    """Return ``values`` as a contiguous float64 vector."""
    return np.ascontiguousarray(values, dtype=np.float64)


def is_prob_vector(values: FloatArray, tolerance: float = PROB_TOLERANCE) -> bool:
    """Return True if ``values`` is non-negative and sums to one within ``tolerance``."""
    if values.ndim != 1 or values.size == 0:
        return False
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        return False
    return abs(math.fsum(values.tolist()) - 1.0) <= tolerance


def softmax(logits: Sequence[float] | FloatArray, temperature: float = 1.0) -> FloatArray:
    """
    Numerically stable softmax of ``logits / temperature``.

    Parameters
    ----------
    logits : Sequence[float] | FloatArray
        Finite real scores.
    temperature : float
        Positive softening temperature.

    Returns
    -------
    FloatArray
        Probability vector of the same length as ``logits``.

    Raises
    ------
    InvalidArgumentError
        If any logit is non-finite or ``temperature`` is not positive.
    """
    values = as_float_array(logits)
    if not math.isfinite(temperature) or temperature <= 0.0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("softmax needs a non-empty vector of finite logits")
    scaled = values / temperature
    shifted = np.exp(scaled - scaled.max())
    return shifted / shifted.sum()


def masked_softmax(logits: FloatArray, keep: npt.NDArray[np.bool_]) -> FloatArray:
    """Softmax over the entries where ``keep`` is True; masked entries get exactly 0."""
    if not np.any(keep):
        raise InvalidArgumentError("mask removes every entry")
    kept = logits[keep]
    if not np.all(np.isfinite(kept)):
        raise InvalidArgumentError("masked softmax needs finite logits on kept entries")
    probs = np.zeros_like(logits, dtype=np.float64)
    shifted = np.exp(kept - kept.max())
    probs[keep] = shifted / shifted.sum()
    return probs


def log_softmax(logits: FloatArray) -> FloatArray:
    """Log-domain softmax, used when summing sequence log-probabilities."""
    shifted = logits - logits.max()
    return shifted - math.log(float(np.exp(shifted).sum()))


def kl_divergence(p: Sequence[float] | FloatArray, q: Sequence[float] | FloatArray) -> float:
    """
    Kullback-Leibler divergence ``sum_i p_i log(p_i / q_i)`` with ``0 log 0 = 0``.

    Raises
    ------
    InvalidArgumentError
        If ``p`` and ``q`` differ in length.
    DivergenceUndefinedError
        If some ``p_i > 0`` has ``q_i = 0``.
    """
    p_arr = as_float_array(p)
    q_arr = as_float_array(q)
    if p_arr.shape != q_arr.shape:
        raise InvalidArgumentError(f"length mismatch: {p_arr.size} vs {q_arr.size}")
    support = p_arr > 0.0
    if np.any(q_arr[support] <= 0.0):
        raise DivergenceUndefinedError("q has zero mass where p is positive")
    terms = p_arr[support] * (np.log(p_arr[support]) - np.log(q_arr[support]))
    # clamp rounding noise on p == q
    return max(math.fsum(terms.tolist()), 0.0)


def cross_entropy(probs: Sequence[float] | FloatArray, label: int) -> float:
    """
    Negative log-likelihood ``-log probs[label]``.

    Raises
    ------
    InvalidArgumentError
        If ``label`` is out of range.
    InfiniteLossError
        If ``probs[label]`` is zero.
    """
    values = as_float_array(probs)
    if not 0 <= label < values.size:
        raise InvalidArgumentError(f"label {label} outside [0, {values.size})")
    mass = float(values[label])
    if mass <= 0.0:
        raise InfiniteLossError(f"zero probability on label {label}")
    return -math.log(mass)


def finite_diff_grad(
    func: Callable[[FloatArray], float],
    params: Sequence[float] | FloatArray,
    eps: float = 1e-6,
) -> FloatArray:
    """
    Central-difference gradient estimate of a scalar function.

    Parameters
    ----------
    func : Callable[[FloatArray], float]
        Scalar objective evaluated on a flat parameter vector.
    params : Sequence[float] | FloatArray
        Point at which the gradient is estimated.
    eps : float
        Perturbation size.

    Returns
    -------
    FloatArray
        ``(f(w + eps e_i) - f(w - eps e_i)) / (2 eps)`` for every coordinate.

    Raises
    ------
    InvalidArgumentError
        If ``eps`` is not positive.
    NonFiniteLossError
        If ``func`` returns a non-finite value at any probe.
    """
    if eps <= 0.0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    point = as_float_array(params).copy()
    grad = np.zeros_like(point)
    for i in range(point.size):
        original = point[i]
        point[i] = original + eps
        f_plus = float(func(point))
        point[i] = original - eps
        f_minus = float(func(point))
        point[i] = original
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteLossError("objective", f"at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic: FloatArray, numeric: FloatArray, floor: float = 1e-8) -> float:
    """``||a - n|| / max(||a|| + ||n||, floor)`` in the Euclidean norm."""
    denom = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), floor)
    return float(np.linalg.norm(analytic - numeric)) / denom


def sample_categorical(dist: Sequence[float] | FloatArray, rng: np.random.Generator) -> int:
    """
    Draw an index with probability proportional to ``dist``.

    Inverse-CDF sampling with one uniform draw per call, so the generator
    advances identically on every platform.

    Raises
    ------
    InvalidArgumentError
        If ``dist`` is empty, negative somewhere, or has no mass.
    """
    values = as_float_array(dist)
    if values.size == 0 or np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("categorical distribution must be finite and non-negative")
    cumulative = np.cumsum(values)
    total = float(cumulative[-1])
    if total <= 0.0:
        raise InvalidArgumentError("categorical distribution has no mass")
    draw = float(rng.random()) * total
    index = int(np.searchsorted(cumulative, draw, side="right"))
    if index >= values.size:
        # rounding at the top of the CDF
        index = int(np.flatnonzero(values)[-1])
    return index


def sum_log_probs(logprobs: Sequence[float]) -> float:
    """Sum per-step log-probabilities exactly (log-domain accumulation)."""
    return math.fsum(logprobs)
