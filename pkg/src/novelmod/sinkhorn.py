"""Entropic-regularized optimal-transport divergence between embedding batches.

This is the d(.,.) behind the novelty and diversity losses: squared-Euclidean
ground cost, uniform marginals, log-domain Sinkhorn iterations. The whole
computation runs under autograd, so gradients reach both embedding batches by
differentiating through the unrolled iterations and the final transport plan.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

MAX_ORACLE_BATCH = 8


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver parameters. epsilon is in cost units; when None it is chosen
    per call as epsilon_scale * mean(C)."""

    epsilon: float | None = None
    epsilon_scale: float = 0.05
    max_iterations: int = 200
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.epsilon_scale > 0:
            raise ValueError(f"epsilon_scale must be positive, got {self.epsilon_scale}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")


class SinkhornResult(NamedTuple):
    value: torch.Tensor  # scalar transport cost <P, C>, differentiable
    converged: bool
    iterations: int


def _check_batch(t: torch.Tensor, name: str) -> torch.Tensor:
    if t.ndim != 2 or t.shape[0] < 1:
        raise ValueError(f"{name} must be a B x E matrix with B >= 1, got shape {tuple(t.shape)}")
    return t


def cost_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise squared Euclidean distances, (B_a, B_b).

    Computed from explicit row differences so that cost_matrix(a, a) has an
    exactly zero diagonal and is exactly symmetric.
    """
    a = _check_batch(a, "a")
    b = _check_batch(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    return (diff * diff).sum(dim=2)


def sinkhorn_distance(a: torch.Tensor, b: torch.Tensor, cfg: SinkhornConfig = SinkhornConfig()) -> SinkhornResult:
    """Entropic-OT transport cost <P*, C> between uniform empirical measures
    on the rows of a and b.

    Iterates the dual potentials in the log domain (log-sum-exp updates) until
    the worst marginal residual drops below cfg.tolerance or max_iterations is
    hit; in the latter case the current value is returned with converged=False
    rather than raising, so training can proceed.
    """
    C = cost_matrix(a, b)
    n, m = C.shape
    eps = cfg.epsilon
    if eps is None:
        eps = max(cfg.epsilon_scale * float(C.mean().detach()), 1e-12)

    log_mu = torch.full((n,), -np.log(n), dtype=C.dtype, device=C.device)
    log_nu = torch.full((m,), -np.log(m), dtype=C.dtype, device=C.device)
    f = torch.zeros(n, dtype=C.dtype, device=C.device)
    g = torch.zeros(m, dtype=C.dtype, device=C.device)

    converged = False
    iterations = 0
    for it in range(cfg.max_iterations):
        iterations = it + 1
        # P_ij = exp((f_i + g_j - C_ij) / eps); enforce row then column marginals.
        f = eps * (log_mu - torch.logsumexp((g[None, :] - C) / eps, dim=1))
        g = eps * (log_nu - torch.logsumexp((f[:, None] - C) / eps, dim=0))
        with torch.no_grad():
            log_P = (f[:, None] + g[None, :] - C) / eps
            P = torch.exp(log_P)
            row_err = (P.sum(dim=1) - log_mu.exp()).abs().sum()
            col_err = (P.sum(dim=0) - log_nu.exp()).abs().sum()
            if max(float(row_err), float(col_err)) <= cfg.tolerance:
                converged = True
                break

    plan = torch.exp((f[:, None] + g[None, :] - C) / eps)
    value = (plan * C).sum()
    return SinkhornResult(value=value, converged=converged, iterations=iterations)


def exact_ot_oracle(a, b) -> float:
    """Exact unregularized OT cost with uniform marginals, by enumerating all
    permutations (an optimal vertex of the Birkhoff polytope is a permutation
    when both marginals are uniform with equal size). Test oracle only.

    Deliberately independent of the torch path: numpy costs, brute force.
    """
    a = np.asarray(a if not isinstance(a, torch.Tensor) else a.detach().cpu().numpy(), dtype=np.float64)
    b = np.asarray(b if not isinstance(b, torch.Tensor) else b.detach().cpu().numpy(), dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"oracle needs equal-shape B x E batches, got {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n > MAX_ORACLE_BATCH:
        raise ValueError(f"oracle refuses B > {MAX_ORACLE_BATCH} (factorial blowup), got B={n}")
    cost = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            d = a[i] - b[j]
            cost[i, j] = float(np.dot(d, d))
    best = min(sum(cost[i, pi[i]] for i in range(n)) for pi in itertools.permutations(range(n)))
    return best / n
