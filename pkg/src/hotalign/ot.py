"""Coupling tensors, marginal operators, multi-marginal Sinkhorn and the proximal point loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import reduce
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, SolverInstabilityError, ValidationError

FEASIBILITY_TOL = 1e-6
MONOTONE_SLACK = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1e-3
    alpha: float = 0.5
    outer_iters: int = 20
    inner_iters: int = 50
    outer_tol: float = 1e-6
    log_floor: float = 1e-16
    feas_tol: float = FEASIBILITY_TOL
    max_inner_iters: int = 500
    monotone_slack: float = MONOTONE_SLACK
    check_monotone: bool = True
    eps_scaling: bool = True
    line_search: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if not 0 <= self.alpha <= 1:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValidationError("iteration counts must be positive")
        if not self.log_floor > 0:
            raise ValidationError("log_floor must be positive")

    def to_dict(self):
        return asdict(self)


def _other_axes(ndim, *keep):
    return tuple(a for a in range(ndim) if a not in keep)


def marginal_sum(t, axis: int) -> np.ndarray:
    t = np.asarray(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValidationError(f"axis {axis} out of range for a {t.ndim}-way tensor")
    axis %= t.ndim
    return t.sum(axis=_other_axes(t.ndim, axis))


def pair_marginal(t, j: int, k: int) -> np.ndarray:
    """Sum over every axis except ``j`` and ``k``; rows index axis ``j``."""
    t = np.asarray(t)
    if j == k:
        raise ValidationError("pair marginal needs two distinct axes")
    P = t.sum(axis=_other_axes(t.ndim, j, k))
    return P if j < k else P.T


def product_measure(measures: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, [np.asarray(m, dtype=float) for m in measures])


def marginal_errors(t, measures) -> list:
    return [float(np.abs(marginal_sum(t, k) - np.asarray(mu)).sum()) for k, mu in enumerate(measures)]


def _axis_shape(ndim, axis, n):
    shape = [1] * ndim
    shape[axis] = n
    return shape


@dataclass
class SinkhornResult:
    coupling: np.ndarray
    marginal_error: float
    iterations: int
    potentials: list = field(default_factory=list)


def _lam_schedule(Q, lam, factor=0.5):
    top = float(Q.max() - Q.min())
    lams = []
    cur = top
    while cur > lam:
        lams.append(cur)
        cur *= factor
    lams.append(lam)
    return lams


def sinkhorn_mm(Q, marginals, lam: float, inner_iters: int = 50, log_floor: float = 1e-16, *,
                tol: Optional[float] = None, max_iters: Optional[int] = None,
                init_potentials=None, eps_scaling: bool = False) -> SinkhornResult:
    """Entropic multi-marginal OT on cost ``Q``: ``S = exp(-Q/lam) * (u_1 x ... x u_K)``.

    Runs ``inner_iters`` cyclic rounds (axis 0 first) of the scaling update
    ``u_k <- u_k * mu_k / P_k(S)`` on log-potentials ``log u_k``. With
    ``tol``, rounds continue past ``inner_iters`` until the summed L1
    marginal error is at most ``tol`` or ``max_iters`` rounds have run.
    ``eps_scaling`` first runs ``inner_iters`` rounds at each of a halving
    sequence of larger regularizations; the fixed point is unchanged.
    """
    Q = np.asarray(Q, dtype=float)
    K = Q.ndim
    if len(marginals) != K:
        raise ValidationError(f"{K}-way cost needs {K} marginals, got {len(marginals)}")
    for k, mu in enumerate(marginals):
        if len(mu) != Q.shape[k]:
            raise ValidationError(f"marginal {k} has length {len(mu)}, axis has {Q.shape[k]}")
    if not np.isfinite(Q).all():
        raise NumericalError("cost tensor has non-finite entries", iteration=0)
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    log_mu = [np.log(np.asarray(mu, dtype=float)) for mu in marginals]
    # potentials in cost units: S = exp((sum_k f_k - Q) / lam)
    if init_potentials is None:
        f = [np.zeros(n) for n in Q.shape]
    else:
        f = [np.array(p, dtype=float) for p in init_potentials]
    mus = [np.asarray(mu, dtype=float) for mu in marginals]
    schedule = _lam_schedule(Q, lam) if eps_scaling else [lam]
    it = 0
    for stage, eps in enumerate(schedule):
        final = stage == len(schedule) - 1
        logS = -Q / eps
        for k in range(K):
            logS += (f[k] / eps).reshape(_axis_shape(K, k, Q.shape[k]))
        shift = logS.max()
        logS -= shift
        f[0] -= eps * shift
        rounds = inner_iters
        if final and tol is not None:
            rounds = max(inner_iters, max_iters or inner_iters)
        # Scaling updates act on S = exp(logS) directly; a log-domain round
        # re-anchors logS whenever some marginal underflows to zero.
        S = None
        for r in range(rounds):
            it += 1
            if S is None:
                for k in range(K):
                    lse = logsumexp(logS, axis=_other_axes(K, k))
                    if not np.isfinite(lse).all():
                        raise NumericalError("non-finite Sinkhorn potential", iteration=it)
                    d = log_mu[k] - lse
                    f[k] += eps * d
                    logS += d.reshape(_axis_shape(K, k, Q.shape[k]))
                S = np.exp(logS)
                pending = [np.zeros(n) for n in Q.shape]
            else:
                for k in range(K):
                    have = S.sum(axis=_other_axes(K, k))
                    if not (have > 0).all() or not np.isfinite(have).all():
                        S = None
                        break
                    d = mus[k] / have
                    S *= d.reshape(_axis_shape(K, k, Q.shape[k]))
                    pending[k] += np.log(d)
                if S is None:
                    _absorb(logS, pending, f, eps)
                    continue
            if final and tol is not None and r + 1 >= inner_iters:
                if _marginal_l1(S, mus) <= tol:
                    break
        if S is None:
            S = np.exp(logS)
        else:
            _absorb(logS, pending, f, eps)
    return SinkhornResult(S, sum(marginal_errors(S, marginals)), it, f)


def _absorb(logS, pending, f, eps):
    """Fold accumulated log scalings into ``logS`` and the potentials."""
    K = logS.ndim
    for k, g in enumerate(pending):
        f[k] += eps * g
        logS += g.reshape(_axis_shape(K, k, len(g)))
        g[:] = 0.0


def _marginal_l1(S, mus):
    K = S.ndim
    return float(sum(np.abs(S.sum(axis=_other_axes(K, k)) - mu).sum() for k, mu in enumerate(mus[:-1])))


def round_to_polytope(S, marginals) -> np.ndarray:
    """Nearby coupling with exactly the prescribed marginals.

    Scales every axis down so no marginal exceeds its target, then adds
    the rank-one tensor of the remaining deficits divided by
    ``deficit_mass ** (K - 1)``. Entries stay nonnegative.
    """
    X = np.array(S, dtype=float)
    K = X.ndim
    for k, mu in enumerate(marginals):
        have = marginal_sum(X, k)
        scale = np.ones_like(have)
        over = have > mu
        scale[over] = mu[over] / have[over]
        X *= scale.reshape(_axis_shape(K, k, len(scale)))
    deficits = [np.maximum(np.asarray(mu) - marginal_sum(X, k), 0.0) for k, mu in enumerate(marginals)]
    mass = float(np.mean([d.sum() for d in deficits]))
    if mass > 0:
        X += product_measure(deficits) / mass ** (K - 1)
    return X


@dataclass
class ProximalResult:
    coupling: np.ndarray
    objective_trace: list
    delta_trace: list = field(default_factory=list)
    marginal_errors: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def _quadratic_step(f0, slope, curvature):
    """Minimizer over [0, 1] of ``f0 + slope*t + curvature*t^2``."""
    if curvature > 0:
        t = min(1.0, max(0.0, -slope / (2.0 * curvature)))
    else:
        t = 1.0 if slope + curvature < 0 else 0.0
    return t


def proximal_solve(base_cost, intra_costs, marginals, config: SolverConfig = SolverConfig(),
                   objective_fn: Optional[Callable] = None, *,
                   gw_fn: Optional[Callable] = None, init=None) -> ProximalResult:
    """Proximal point method with a KL proximal term, one Sinkhorn solve per step.

    Each step solves ``min <G_t, S> + lam KL(S || S_t)`` over the coupling
    polytope, where ``G_t = (1-alpha) C + alpha L(S_t)``, by Sinkhorn on
    ``Q_t = G_t - lam log max(S_t, log_floor)``; the result is rounded onto
    the polytope. The step is then taken at the exact minimizer of the
    objective on the segment ``S_t -> S_{t+1}`` (it is quadratic there);
    if even that raises the objective the iterate stays put. Stops after
    ``outer_iters`` steps or once ``||S_{t+1} - S_t||_1 < outer_tol``. The trace holds the objective at
    ``S_0, S_1, ...``.
    """
    C = np.asarray(base_cost, dtype=float)
    marginals = [np.asarray(m, dtype=float) for m in marginals]
    if gw_fn is None:
        from .mfgw import mfgw_L_tensor

        def gw_fn(S):
            return mfgw_L_tensor(intra_costs, S)

    alpha, lam = config.alpha, config.lam
    S = product_measure(marginals) if init is None else np.array(init, dtype=float)
    if S.shape != C.shape:
        raise ValidationError(f"coupling shape {S.shape} does not match cost shape {C.shape}")

    def gw(S):
        return gw_fn(S) if alpha > 0 else np.zeros_like(C)

    def objective(S, L):
        if objective_fn is not None:
            return float(objective_fn(S))
        return float(np.vdot((1 - alpha) * C + alpha * L, S))

    L = gw(S)
    result = ProximalResult(S, [objective(S, L)])
    for t in range(config.outer_iters):
        Q = (1 - alpha) * C + alpha * L - lam * np.log(np.maximum(S, config.log_floor))
        sk = sinkhorn_mm(Q, marginals, lam, config.inner_iters, config.log_floor,
                         tol=config.feas_tol, max_iters=config.max_inner_iters,
                         eps_scaling=config.eps_scaling and t == 0)
        S_new = round_to_polytope(sk.coupling, marginals)
        L_new = gw(S_new)
        obj = objective(S_new, L_new)
        prev = result.objective_trace[-1]
        step = 1.0
        if config.line_search:
            D = S_new - S
            slope = (1 - alpha) * np.vdot(C, D) + 2 * alpha * np.vdot(L, D)
            curvature = alpha * np.vdot(gw(D), D) if alpha > 0 else 0.0
            step = _quadratic_step(prev, slope, curvature)
            S_new = S + step * D
            L_new = gw(S_new)
            obj = objective(S_new, L_new)
            if obj > prev:
                step, S_new, L_new, obj = 0.0, S, L, prev
        delta = float(np.abs(S_new - S).sum())
        S, L = S_new, L_new
        result.objective_trace.append(obj)
        result.delta_trace.append(delta)
        result.marginal_errors.append(sk.marginal_error)
        result.inner_iterations.append(sk.iterations)
        result.step_sizes.append(step)
        result.coupling = S
        if config.check_monotone and obj > prev + config.monotone_slack:
            raise SolverInstabilityError(
                f"objective increased from {prev!r} to {obj!r}", iteration=t + 1,
                trace=result.objective_trace)
        if delta < config.outer_tol:
            result.converged = True
            break
    return result
