"""
Quadrature rules on the unit hypercube and weight diagnostics.

Keep these functions pure (no files except the explicit csv helpers) so they
are easy to unit test.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from annealmap import settings
from annealmap.exceptions import (
    CapabilityError,
    ContractViolationError,
    DegenerateRuleError,
)

from .models import QuadratureRule

logger = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
# Random low-order bits appended below the scrambled digits.
_TAIL_BITS = 20


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _MIX_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_2
    return z ^ (z >> np.uint64(31))


def _smallest_prime_above(d: int) -> int:
    candidate = d + 1
    while any(candidate % k == 0 for k in range(2, math.isqrt(candidate) + 1)) or candidate < 2:
        candidate += 1
    return candidate


def padding_for(d: int, n: int) -> tuple[int, int]:
    """Return (b, p): b the smallest prime > d and p the smallest integer with b**p > n."""
    base = _smallest_prime_above(d)
    power = 0
    while base**power <= n:
        power += 1
    return base, power


def _dimension_key(seed: int, dim: int) -> np.uint64:
    # Counter-based generator keyed by (seed, dimension index).
    bit_generator = np.random.Philox(key=np.array([seed, dim], dtype=np.uint64))
    return np.uint64(bit_generator.random_raw())


def _nested_uniform_scramble(digits: np.ndarray, key: np.uint64, bits: int) -> np.ndarray:
    """
    Owen scrambling of one coordinate given as `bits`-bit integers.

    The flip applied to digit k depends on the k leading digits of the
    unscrambled point, so points sharing a prefix share the flips above it.
    """
    scrambled = np.zeros_like(digits)
    one = np.uint64(1)
    for k in range(bits):
        shift = np.uint64(bits - k)
        prefix = digits >> shift
        node = prefix + (one << np.uint64(k))
        flip = _mix64(key + node * _GOLDEN) & one
        digit = (digits >> (shift - one)) & one
        scrambled |= (digit ^ flip) << (shift - one)

    tail = _mix64(key ^ _mix64(digits + _GOLDEN)) >> np.uint64(64 - _TAIL_BITS)
    combined = (scrambled << np.uint64(_TAIL_BITS)) | tail
    return combined.astype(float) * 2.0 ** -(bits + _TAIL_BITS)


def scrambled_sobol(d: int, count: int, seed: int) -> np.ndarray:
    """First `count` points of the Owen-scrambled Sobol' sequence in dimension d."""
    bits = settings.SCRAMBLE_BITS
    sobol = qmc.Sobol(d, scramble=False, bits=bits)
    m = max(0, math.ceil(math.log2(count))) if count > 1 else 0
    raw = sobol.random_base2(m)[:count]
    digits = np.rint(raw * 2.0**bits).astype(np.uint64)

    points = np.empty((count, d), dtype=float)
    for j in range(d):
        points[:, j] = _nested_uniform_scramble(digits[:, j], _dimension_key(seed, j), bits)
    return points


def rqmc_rule(d: int, n: int, seed: int) -> QuadratureRule:
    """
    Equal-weight randomized QMC rule.

    Draws n points out of the first b**p points of a scrambled Sobol'
    sequence, where b is the smallest prime > d and p the smallest integer
    with b**p > n.

    Raises:
        CapabilityError: d exceeds the supported direction-number table
        ContractViolationError: d < 1, n < 1 or a negative seed
    """
    if d < 1 or n < 1:
        raise ContractViolationError(f"rqmc_rule needs d >= 1 and n >= 1, got d={d} n={n}")
    if seed < 0:
        raise ContractViolationError(f"seed must be non-negative, got {seed}")
    if d > settings.MAX_RQMC_DIMENSION:
        raise CapabilityError(
            f"rQMC rules support d <= {settings.MAX_RQMC_DIMENSION}, got d={d}"
        )

    base, power = padding_for(d, n)
    candidates = scrambled_sobol(d, base**power, seed)
    logger.debug(f"rqmc_rule d={d} n={n} base={base} power={power}")
    return QuadratureRule(points=candidates[:n], weights=np.full(n, 1.0 / n), normalized=True)


def uniform_random_rule(d: int, n: int, seed: int) -> QuadratureRule:
    rng = np.random.default_rng(seed)
    return QuadratureRule(points=rng.random((n, d)), weights=np.full(n, 1.0 / n), normalized=True)


def gauss_legendre_rule(d: int, order: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule with `order` nodes per dimension, mapped to [0,1]^d."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    return _tensor_rule(nodes, weights, d)


def midpoint_grid_rule(d: int, m: int) -> QuadratureRule:
    nodes = (np.arange(m) + 0.5) / m
    return _tensor_rule(nodes, np.full(m, 1.0 / m), d)


def _tensor_rule(nodes: np.ndarray, weights: np.ndarray, d: int) -> QuadratureRule:
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weight_grids = np.meshgrid(*([weights] * d), indexing="ij")
    tensor_weights = np.prod(np.stack([g.ravel() for g in weight_grids], axis=1), axis=1)
    return QuadratureRule(
        points=points, weights=tensor_weights / tensor_weights.sum(), normalized=True
    )


def ress(rule: QuadratureRule) -> float:
    """
    Relative effective sample size (N * sum w^2)^-1, in [1/N, 1].

    Raises:
        ContractViolationError: rule is not normalized
    """
    if not rule.normalized:
        raise ContractViolationError("ress requires a normalized rule")
    return float(1.0 / (rule.size * np.sum(rule.weights**2)))


def normalize(rule: QuadratureRule) -> QuadratureRule:
    """
    Divide weights by their sum.

    Raises:
        DegenerateRuleError: the weight sum is zero, negative or not finite
    """
    if rule.normalized:
        return rule
    total = float(np.sum(rule.weights))
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateRuleError(f"cannot normalize a rule with weight sum {total!r}")
    return rule.with_weights(rule.weights / total, normalized=True)


def star_discrepancy(rule: QuadratureRule) -> float:
    """L2-star discrepancy of the rule's points (weights ignored)."""
    return float(qmc.discrepancy(rule.points, method="L2-star"))


def write_rule_csv(rule: QuadratureRule, path: Path) -> None:
    """One row per point: theta_1..theta_d, weight. Floats in shortest round-trip form."""
    header = [f"theta_{i + 1}" for i in range(rule.dimension)] + ["weight"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for point, weight in zip(rule.points, rule.weights):
            writer.writerow([repr(float(x)) for x in point] + [repr(float(weight))])


def read_rule_csv(path: Path, *, normalized: bool = True) -> QuadratureRule:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [[float(value) for value in row] for row in reader if row]
    if not header or header[-1] != "weight":
        raise ContractViolationError(f"{path} is not a quadrature csv (last column must be weight)")
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return QuadratureRule(points=table[:, :-1], weights=table[:, -1], normalized=normalized)
