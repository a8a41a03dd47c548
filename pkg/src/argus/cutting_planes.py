"""Feasibility function, cutting-plane construction, and polytope upkeep.

The feasibility function h measures the l1 + weighted squared distance of a
lower block from the estimated lower solution.  An infeasible point yields a
supporting hyperplane built from h's subgradient; each agent keeps at most M
planes, dropping the ones whose multipliers stayed at zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (ConsistencyError, InvalidArgumentError, NumericError,
                     PreconditionError, StalenessError)

Blocks = dict[int, np.ndarray]


@dataclass
class CuttingPlane:
    """One linear constraint sum_j a_j.x_j + sum_j b_j.y_j + c <= 0, with
    coefficients keyed by the owner's neighbor ids at creation time."""

    owner: int
    a: Blocks
    b: Blocks
    c: float
    created_t: int = 0
    id: int = 0

    def __post_init__(self):
        if set(self.a) != set(self.b):
            raise InvalidArgumentError("a and b coefficients must share the same neighbor keys")
        for coeffs in (self.a, self.b):
            for j, v in coeffs.items():
                v = np.asarray(v, dtype=np.float64)
                if not np.all(np.isfinite(v)):
                    raise InvalidArgumentError(f"non-finite cut coefficient for neighbor {j}")
                coeffs[j] = v
        if not np.isfinite(self.c):
            raise InvalidArgumentError("non-finite cut offset")

    @property
    def keys(self) -> list[int]:
        return sorted(self.a)

    def slack(self, x_of: Mapping[int, np.ndarray], y_of: Mapping[int, np.ndarray]) -> float:
        """Constraint value at the given per-agent vectors (> 0 means violated)."""
        total = self.c
        for j in self.keys:
            if j not in x_of or j not in y_of:
                raise StalenessError(f"plane {self.id} of agent {self.owner} references uncached agent {j}")
            total += float(self.a[j] @ x_of[j]) + float(self.b[j] @ y_of[j])
        return total

    def norms(self) -> tuple[float, float]:
        na = float(np.sqrt(sum(float(v @ v) for v in self.a.values())))
        nb = float(np.sqrt(sum(float(v @ v) for v in self.b.values())))
        return na, nb


@dataclass
class Polytope:
    owner: int
    cap: int
    planes: list[CuttingPlane] = field(default_factory=list)

    def __post_init__(self):
        if self.cap < 1:
            raise InvalidArgumentError(f"polytope cap must be >= 1, got {self.cap}")

    def __len__(self) -> int:
        return len(self.planes)


def eval_h(y, y_star, lambda1: float) -> float:
    """h = ||y - y*||_1 + lambda1 * ||y - y*||_2^2 over matching blocks."""
    if lambda1 < 0:
        raise InvalidArgumentError(f"lambda1 must be >= 0, got {lambda1}")
    y = np.asarray(y, dtype=np.float64)
    y_star = np.asarray(y_star, dtype=np.float64)
    if y.shape != y_star.shape:
        raise InvalidArgumentError(f"shape mismatch: {y.shape} vs {y_star.shape}")
    diff = (y - y_star).ravel()
    return float(np.abs(diff).sum() + lambda1 * (diff @ diff))


def eval_h_blocks(y_blocks: Blocks, y_star_blocks: Blocks, lambda1: float) -> float:
    """h over a keyed collection of blocks (a per-agent neighborhood)."""
    if set(y_blocks) != set(y_star_blocks):
        raise InvalidArgumentError("y and y* blocks must share keys")
    return sum(eval_h(y_blocks[j], y_star_blocks[j], lambda1) for j in y_blocks)


def cut_gradients(x_blocks: Blocks, y_blocks: Blocks, y_star_blocks: Blocks, lambda1: float,
                  y_star_fn: Callable[[Blocks], Blocks] | None = None,
                  fd_step: float = 1e-6) -> tuple[Blocks, Blocks]:
    """Subgradient of h at the given point, per neighbor block.

    The y part is analytic (sign(0) = 0 convention).  The x part differences
    h through the supplied lower-solution map; without one the estimate is
    treated as frozen and the x coefficients are zero.
    """
    b: Blocks = {}
    for j, yj in y_blocks.items():
        diff = np.asarray(yj, dtype=np.float64) - np.asarray(y_star_blocks[j], dtype=np.float64)
        b[j] = np.sign(diff) + 2.0 * lambda1 * diff

    a: Blocks = {}
    if y_star_fn is None:
        for j, xj in x_blocks.items():
            a[j] = np.zeros_like(np.asarray(xj, dtype=np.float64))
        return a, b

    # h is separable across blocks; cache per-block terms and recompute only
    # blocks whose lower-solution array the map actually replaced.
    base_ys = y_star_fn(dict(x_blocks))
    base_h = {j: eval_h(y_blocks[j], base_ys[j], lambda1) for j in y_blocks}

    def h_at(ys: Blocks) -> float:
        total = 0.0
        for j in y_blocks:
            if ys[j] is base_ys[j]:
                total += base_h[j]
            else:
                total += eval_h(y_blocks[j], ys[j], lambda1)
        return total

    for j in sorted(x_blocks):
        xj = np.asarray(x_blocks[j], dtype=np.float64)
        grad = np.empty_like(xj)
        for k in range(xj.size):
            probe = dict(x_blocks)
            bumped = xj.copy()
            bumped[k] += fd_step
            probe[j] = bumped
            h_plus = h_at(y_star_fn(probe))
            bumped = xj.copy()
            bumped[k] -= fd_step
            probe[j] = bumped
            h_minus = h_at(y_star_fn(probe))
            if not (np.isfinite(h_plus) and np.isfinite(h_minus)):
                raise NumericError(
                    f"non-finite feasibility value while differencing x[{j}][{k}]", coordinate=k)
            grad[k] = (h_plus - h_minus) / (2.0 * fd_step)
        a[j] = grad
    return a, b


def build_cut(x_blocks: Blocks, y_blocks: Blocks, y_star_blocks: Blocks, lambda1: float,
              epsilon: float, owner: int = 0, created_t: int = 0, plane_id: int = 0,
              y_star_fn: Callable[[Blocks], Blocks] | None = None,
              fd_step: float = 1e-6) -> CuttingPlane:
    """Supporting hyperplane separating an infeasible point from {h <= epsilon}.

    The offset is chosen so the plane evaluates to exactly h(point) - epsilon
    at the generating point.
    """
    h_val = eval_h_blocks(y_blocks, y_star_blocks, lambda1)
    if h_val <= epsilon:
        raise PreconditionError(
            f"point is feasible (h={h_val:.6g} <= eps={epsilon:.6g}); no cut to build")
    a, b = cut_gradients(x_blocks, y_blocks, y_star_blocks, lambda1,
                         y_star_fn=y_star_fn, fd_step=fd_step)
    c = h_val - epsilon
    for j in a:
        c -= float(a[j] @ np.asarray(x_blocks[j], dtype=np.float64))
        c -= float(b[j] @ np.asarray(y_blocks[j], dtype=np.float64))
    return CuttingPlane(owner=owner, a=a, b=b, c=c, created_t=created_t, id=plane_id)


def maintain_polytope(polytope: Polytope, lambda_now: list[float], lambda_prev: list[float],
                      candidate: CuttingPlane | None = None) -> tuple[Polytope, list[float]]:
    """Drop planes whose multiplier sat at zero for two consecutive iterations,
    then insert the candidate (fresh multiplier 0), evicting the oldest among
    the smallest-multiplier planes if the cap is reached."""
    if len(lambda_now) != len(polytope.planes) or len(lambda_prev) != len(polytope.planes):
        raise ConsistencyError(
            f"multiplier lists (now={len(lambda_now)}, prev={len(lambda_prev)}) "
            f"misaligned with {len(polytope.planes)} planes")

    keep = [l for l in range(len(polytope.planes))
            if not (lambda_now[l] == 0.0 and lambda_prev[l] == 0.0)]
    planes = [polytope.planes[l] for l in keep]
    lams = [lambda_now[l] for l in keep]

    if candidate is not None:
        if len(planes) >= polytope.cap:
            evict = min(range(len(planes)),
                        key=lambda l: (lams[l], planes[l].created_t, l))
            del planes[evict]
            del lams[evict]
        planes.append(candidate)
        lams.append(0.0)

    return Polytope(owner=polytope.owner, cap=polytope.cap, planes=planes), lams
