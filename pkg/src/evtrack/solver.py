"""Damped Gauss-Newton (Levenberg-Marquardt) over parameter blocks.

Residual callbacks return ``(r, [J_0, J_1, ...])`` with one Jacobian per
referenced block, taken with respect to that block's *local* increment.
Cost is ``0.5 * sum(rho(|r|^2))`` where rho is applied per block, or per row
for blocks flagged ``per_row_loss`` (used for many scalar event residuals
that share one callback).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RobustLoss:
    kind: str = "none"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "huber"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber" and not self.scale > 0:
            raise ValueError("huber scale must be positive")


def robust_weight(loss: Optional[RobustLoss], s):
    """Loss value and first derivative at squared norm ``s`` (scalar or array)."""
    s = np.asarray(s, dtype=float)
    if loss is None or loss.kind == "none":
        return s.copy() if s.ndim else float(s), np.ones_like(s) if s.ndim else 1.0
    c2 = loss.scale * loss.scale
    inlier = s <= c2
    root = np.sqrt(np.maximum(s, c2))
    rho = np.where(inlier, s, 2.0 * loss.scale * root - c2)
    drho = np.where(inlier, 1.0, loss.scale / root)
    if s.ndim == 0:
        return float(rho), float(drho)
    return rho, drho


class ParameterBlock:
    """A vector of parameters with an optional manifold ``plus``."""

    def __init__(self, value, local_size: Optional[int] = None,
                 plus: Optional[Callable] = None, fixed: bool = False, name: str = ""):
        self.value = np.array(value, dtype=float)
        self.local_size = self.value.size if local_size is None else int(local_size)
        self._plus = plus
        self.fixed = fixed
        self.name = name

    def plus(self, value, delta):
        if self._plus is None:
            return value + delta
        return self._plus(value, delta)


class ResidualBlock:
    def __init__(self, func: Callable, params: Sequence[ParameterBlock],
                 loss: Optional[RobustLoss] = None, per_row_loss: bool = False, name: str = ""):
        self.func = func
        self.params = list(params)
        self.loss = loss
        self.per_row_loss = per_row_loss
        self.name = name

    def evaluate(self, values):
        return self.func(*values)

    def cost_terms(self, r):
        if self.per_row_loss:
            rho, drho = robust_weight(self.loss, r * r)
            return float(np.sum(rho)), drho
        rho, drho = robust_weight(self.loss, float(r @ r))
        return rho, drho


class Problem:
    def __init__(self):
        self.parameter_blocks: List[ParameterBlock] = []
        self.residual_blocks: List[ResidualBlock] = []

    def add_parameter_block(self, block: ParameterBlock) -> ParameterBlock:
        if not any(b is block for b in self.parameter_blocks):
            self.parameter_blocks.append(block)
        return block

    def add_residual_block(self, func, params, loss=None, per_row_loss=False, name=""):
        for p in params:
            if not any(b is p for b in self.parameter_blocks):
                raise ValueError(f"residual block {name!r} references an unregistered parameter block")
        block = ResidualBlock(func, params, loss, per_row_loss, name or f"residual_{len(self.residual_blocks)}")
        self.residual_blocks.append(block)
        return block

    def free_blocks(self):
        return [b for b in self.parameter_blocks if not b.fixed]

    def _offsets(self):
        offsets = {}
        n = 0
        for b in self.free_blocks():
            offsets[id(b)] = n
            n += b.local_size
        return offsets, n

    def cost(self, values=None) -> float:
        values = values or {id(b): b.value for b in self.parameter_blocks}
        total = 0.0
        for rb in self.residual_blocks:
            r, _ = rb.evaluate([values[id(p)] for p in rb.params])
            c, _ = rb.cost_terms(np.asarray(r, dtype=float))
            total += c
        return 0.5 * total

    def linearize(self, values=None, check_finite: bool = True):
        """Normal equations ``(H, g, cost)`` over the free local coordinates.

        Robust losses enter through the first-order (IRLS) weight
        ``rho'(s)``.
        """
        values = values or {id(b): b.value for b in self.parameter_blocks}
        offsets, n = self._offsets()
        H = np.zeros((n, n))
        g = np.zeros(n)
        total = 0.0
        for rb in self.residual_blocks:
            r, jacs = rb.evaluate([values[id(p)] for p in rb.params])
            r = np.asarray(r, dtype=float)
            if check_finite and not np.all(np.isfinite(r)):
                raise SolverError(f"non-finite residual in block {rb.name!r}")
            c, w = rb.cost_terms(r)
            total += c
            cols = []
            for p, J in zip(rb.params, jacs):
                if p.fixed:
                    continue
                J = np.asarray(J, dtype=float).reshape(len(r), p.local_size)
                if check_finite and not np.all(np.isfinite(J)):
                    raise SolverError(f"non-finite Jacobian in block {rb.name!r}")
                cols.append((offsets[id(p)], J))
            for oa, Ja in cols:
                WJa = Ja * np.asarray(w)[:, None] if rb.per_row_loss else Ja * w
                g[oa:oa + Ja.shape[1]] += WJa.T @ r
                for ob, Jb in cols:
                    H[oa:oa + Ja.shape[1], ob:ob + Jb.shape[1]] += WJa.T @ Jb
        return H, g, 0.5 * total

    def values(self):
        return {id(b): b.value for b in self.parameter_blocks}

    def _step(self, values, delta):
        offsets, _ = self._offsets()
        new = dict(values)
        for b in self.free_blocks():
            o = offsets[id(b)]
            new[id(b)] = b.plus(values[id(b)], delta[o:o + b.local_size])
        return new


@dataclass
class SolverOptions:
    max_iters: int = 50
    grad_tol: float = 1e-10
    step_tol: float = 1e-10
    function_tol: float = 0.0
    initial_damping: float = 1e-12
    min_damping: float = 1e-15
    max_damping: float = 1e12
    verbose: bool = False


@dataclass
class SolverReport:
    initial_cost: float
    final_cost: float
    iterations: int
    accepted: int
    termination: str
    cost_history: List[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination in ("gradient", "step", "function", "no_free_parameters")


def solve(problem: Problem, options: SolverOptions = SolverOptions()) -> SolverReport:
    """Minimize the problem in place; parameter block values are overwritten."""
    values = problem.values()
    cost0 = problem.cost(values)
    if not math.isfinite(cost0):
        raise SolverError("initial cost is not finite")
    if not problem.free_blocks():
        return SolverReport(cost0, cost0, 0, 0, "no_free_parameters", [cost0])

    lam = options.initial_damping
    cost = cost0
    history = [cost0]
    accepted = 0
    termination = "max_iterations"
    H, g, _ = problem.linearize(values)
    it = 0
    for it in range(1, options.max_iters + 1):
        if np.max(np.abs(g)) < options.grad_tol:
            termination = "gradient"
            it -= 1
            break
        diag = np.maximum(np.diag(H), 1e-12)
        while True:
            A = H + lam * np.diag(diag)
            try:
                delta = -cho_solve(cho_factor(A), g)
            except np.linalg.LinAlgError:
                lam = min(lam * 10.0, options.max_damping)
                if lam >= options.max_damping:
                    termination = "singular"
                    break
                continue
            break
        if termination == "singular":
            break
        step_norm = float(np.linalg.norm(delta))
        x_norm = math.sqrt(sum(float(np.sum(values[id(b)] ** 2)) for b in problem.free_blocks()))
        if step_norm < options.step_tol * (x_norm + options.step_tol):
            termination = "step"
            it -= 1
            break
        trial = problem._step(values, delta)
        new_cost = problem.cost(trial)
        if not math.isfinite(new_cost):
            bad = _first_nonfinite(problem, trial)
            raise SolverError(f"non-finite residual in block {bad!r} during solve")
        if options.verbose:
            log.info("iter %3d cost %.6e -> %.6e damping %.2e", it, cost, new_cost, lam)
        if new_cost <= cost:
            rel = (cost - new_cost) / max(cost, 1e-300)
            values = trial
            cost = new_cost
            accepted += 1
            history.append(cost)
            lam = max(lam * 0.5, options.min_damping)
            H, g, _ = problem.linearize(values)
            if rel < options.function_tol:
                termination = "function"
                break
        else:
            lam = lam * 10.0
            if lam > options.max_damping:
                termination = "damping"
                break

    for b in problem.free_blocks():
        b.value = np.array(values[id(b)], dtype=float)
    return SolverReport(cost0, cost, it, accepted, termination, history)


def _first_nonfinite(problem: Problem, values) -> str:
    for rb in problem.residual_blocks:
        r, _ = rb.evaluate([values[id(p)] for p in rb.params])
        if not np.all(np.isfinite(r)):
            return rb.name
    return "<unknown>"


def marginal_information(problem: Problem, block: ParameterBlock) -> np.ndarray:
    """Information of one free block with every other free block marginalized (Schur complement)."""
    if block.fixed:
        raise ValueError("cannot marginalize onto a fixed block")
    H, _, _ = problem.linearize()
    offsets, n = problem._offsets()
    o = offsets[id(block)]
    keep = np.arange(o, o + block.local_size)
    rest = np.setdiff1d(np.arange(n), keep)
    M = H[np.ix_(keep, keep)]
    if len(rest):
        M = M - H[np.ix_(keep, rest)] @ np.linalg.solve(H[np.ix_(rest, rest)], H[np.ix_(rest, keep)])
    return 0.5 * (M + M.T)


def check_jacobians(problem: Problem, eps: float = 1e-6):
    """Compare analytic block Jacobians with central differences.

    Returns a list of ``(residual name, parameter name, max relative error)``.
    """
    results = []
    values = problem.values()
    for rb in problem.residual_blocks:
        args = [values[id(p)] for p in rb.params]
        r0, jacs = rb.evaluate(args)
        r0 = np.asarray(r0, dtype=float)
        for k, p in enumerate(rb.params):
            J = np.asarray(jacs[k], dtype=float).reshape(len(r0), p.local_size)
            num = np.zeros_like(J)
            for d in range(p.local_size):
                e = np.zeros(p.local_size)
                e[d] = eps
                a_plus = list(args)
                a_minus = list(args)
                a_plus[k] = p.plus(args[k], e)
                a_minus[k] = p.plus(args[k], -e)
                rp, _ = rb.evaluate(a_plus)
                rm, _ = rb.evaluate(a_minus)
                num[:, d] = (np.asarray(rp) - np.asarray(rm)) / (2 * eps)
            scale = max(np.max(np.abs(num)), 1e-12)
            results.append((rb.name, p.name, float(np.max(np.abs(J - num)) / scale)))
    return results
