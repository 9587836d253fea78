"""Mixed-strategy designs for two treatments under an RKHS structure.

Both semidefinite programs are handled with first-order methods:

* weights over a fixed list of partitions: exponentiated gradient on the simplex
  with an exact penalty on the worst-case-ratio constraint;
* a full P-matrix: projected subgradient descent, projecting with Dykstra's
  alternating projections onto {diag(P) = 1} and {0 <= P <= c I} in the
  coordinates of the subspace orthogonal to the all-ones vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignments import from_signs
from .distribution import DesignDistribution
from .errors import InfeasibleError, InputError
from .imbalance import p_matrix_cr, p_matrix_from_support
from .linalg import as_symmetric, cholesky_psd, psd_sqrt
from .pure_opt import top_t_solutions

FEAS_TOL = 1e-6


# ---------------------------------------------------------------------------
# weights over given partitions


@dataclass
class SimplexWeights:
    theta: np.ndarray
    objective: float  # lambda_max(sqrt(K) P sqrt(K)) with P = sum theta_t u_t u_t^T
    ratio: float  # (1 - 1/n) lambda_max(P)
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


def _top_pair(theta, G):
    """lambda_max of diag(sqrt(theta)) G diag(sqrt(theta)) and its gradient in theta."""
    s = np.sqrt(np.clip(theta, 0.0, None))
    M = s[:, None] * G * s[None, :]
    w, v = np.linalg.eigh(0.5 * (M + M.T))
    lam, y = float(w[-1]), v[:, -1]
    if lam <= 0:
        return max(lam, 0.0), np.zeros_like(theta)
    h = G @ (s * y)
    return lam, h * h / lam


def _eg_minimize(theta0, value_grad, iters, eta0):
    """Exponentiated gradient with a 1/sqrt(k) step; returns every iterate's value."""
    theta = theta0.copy()
    out = []
    for k in range(iters):
        val, grad = value_grad(theta)
        out.append((val, theta.copy()))
        scale = float(np.max(np.abs(grad)))
        if scale <= 0:
            break
        step = eta0 / math.sqrt(k + 1) / scale
        logits = np.log(np.clip(theta, 1e-300, None)) - step * grad
        logits -= logits.max()
        theta = np.exp(logits)
        theta /= theta.sum()
    return out


def algorithm2_weights(K, us, rho: float = math.inf, max_iter: int = 2000, penalty_rounds: int = 8) -> SimplexWeights:
    """Weights theta minimizing lambda_max(sum_t theta_t sqrt(K) u_t u_t^T sqrt(K)).

    Subject to (1 - 1/n) lambda_max(sum_t theta_t u_t u_t^T) <= rho.  Heuristic: the
    returned objective never exceeds that of the best feasible vertex.
    """
    if rho < 1:
        raise InfeasibleError(f"rho={rho} is below 1, no design can satisfy it")
    K = as_symmetric(K, "K")
    U = np.atleast_2d(np.asarray(us, dtype=float))
    T, n = U.shape
    if n != K.shape[0]:
        raise InputError("sign vectors and K differ in size", module="mixed_opt")
    if np.any(np.abs(U) != 1) or np.any(U.sum(axis=1) != 0):
        raise InputError("every u must be a balanced sign vector", module="mixed_opt")
    A = psd_sqrt(K) @ U.T
    G = A.T @ A
    H = U @ U.T
    frac = 1.0 - 1.0 / n

    def objective(theta):
        return _top_pair(theta, G)

    def ratio(theta):
        lam, grad = _top_pair(theta, H)
        return frac * lam, frac * grad

    vert_obj = np.diag(G)
    if T == 1:
        th = np.ones(1)
        r = ratio(th)[0]
        if r > rho + FEAS_TOL:
            raise InfeasibleError(f"a single partition has worst-case ratio {r:.4g} > rho={rho}")
        return SimplexWeights(th, float(vert_obj[0]), r, 0, True, [float(vert_obj[0])])

    best_theta, best_val = None, math.inf
    if frac * n <= rho + FEAS_TOL:
        k = int(np.argmin(vert_obj))
        best_theta = np.eye(T)[k]
        best_val = float(vert_obj[k])
    start = np.full(T, 1.0 / T)
    if best_theta is None:
        # phase 1: find a point satisfying the ratio constraint
        trace = _eg_minimize(start, ratio, max_iter, 1.0)
        rmin, th = min(trace, key=lambda r: r[0])
        if rmin > rho + FEAS_TOL:
            raise InfeasibleError(
                f"smallest worst-case ratio found over these partitions is {rmin:.6g} > rho={rho}"
            )
        best_theta, best_val = th, objective(th)[0]
        start = th
    else:
        start = best_theta * 0.5 + start * 0.5

    history = [best_val]
    iters = 0
    converged = True
    if math.isinf(rho):
        trace = _eg_minimize(start, objective, max_iter, 1.0)
        iters += len(trace)
        for val, th in trace:
            if val < best_val:
                best_val, best_theta = val, th
            history.append(best_val)
    else:
        mu = max(float(np.max(vert_obj)), 1e-12) / max(rho, 1.0)
        for _ in range(penalty_rounds):
            def penalized(theta, mu=mu):
                f, gf = objective(theta)
                c, gc = ratio(theta)
                if c > rho:
                    return f + mu * (c - rho), gf + mu * gc
                return f, gf

            trace = _eg_minimize(start, penalized, max_iter, 1.0)
            iters += len(trace)
            last_feasible = False
            for _, th in trace:
                f = objective(th)[0]
                c = ratio(th)[0]
                last_feasible = c <= rho + 1e-9
                if last_feasible and f < best_val:
                    best_val, best_theta = f, th
                history.append(best_val)
            if last_feasible:
                break
            mu *= 2.0
        else:
            converged = False
    theta = np.where(best_theta < 1e-12, 0.0, best_theta)
    theta /= theta.sum()
    f = objective(theta)[0]
    c = ratio(theta)[0]
    if c > rho + FEAS_TOL or f > best_val + 1e-9 * (1 + abs(best_val)):
        theta = best_theta / best_theta.sum()
        f, c = objective(theta)[0], ratio(theta)[0]
    return SimplexWeights(theta, f, c, iters, converged, history)


def algorithm3_design(K, T: int, rho: float = math.inf, time_budget: float | None = None,
                      max_iter: int = 2000) -> DesignDistribution:
    """Mix the T best partitions with weights from :func:`algorithm2_weights`."""
    K = as_symmetric(K, "K")
    n = K.shape[0]
    sols = top_t_solutions(K, T, time_budget=time_budget)
    U = np.array([u for u, _ in sols])
    w = algorithm2_weights(K, U, rho, max_iter=max_iter)
    keep = w.theta > 0
    support = np.array([from_signs(u) for u in U[keep]])
    theta = w.theta[keep] / w.theta[keep].sum()
    P = p_matrix_from_support(support, theta, 2)
    meta = {
        "T": len(sols),
        "rho": rho,
        "objective": w.objective,
        "m_m_squared": 4.0 * w.objective / n**2,
        "worst_case_ratio": w.ratio,
        "partition_values": [4.0 * v / n**2 for _, v in sols],
        "converged": w.converged,
    }
    return DesignDistribution(n=n, m=2, support=support, weights=theta, name="mixed_optimal", meta=meta, p_matrix=P)


# ---------------------------------------------------------------------------
# full P-matrix relaxation


@dataclass
class PMatrixResult:
    P: np.ndarray
    objective: float  # lambda_max(sqrt(K) P sqrt(K))
    ratio: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def _ones_complement(n: int) -> np.ndarray:
    """Orthonormal basis of the subspace orthogonal to the all-ones vector."""
    e = np.ones((n, 1)) / math.sqrt(n)
    q, _ = np.linalg.qr(np.hstack([e, np.eye(n)[:, : n - 1]]))
    return q[:, 1:]


class _Projector:
    """Projections for Z (order n-1) with P = Q Z Q^T."""

    def __init__(self, n: int, cap: float):
        self.n = n
        self.Q = _ones_complement(n)
        self.cap = cap
        M = (1.0 - 2.0 / n) * np.eye(n) + np.ones((n, n)) / n**2
        self.Minv = np.linalg.inv(M)

    def affine(self, Z):
        Q = self.Q
        resid = np.einsum("ij,jk,ik->i", Q, Z, Q) - 1.0
        lam = self.Minv @ resid
        return Z - (Q.T * lam) @ Q

    def spectral(self, Z):
        w, v = np.linalg.eigh(0.5 * (Z + Z.T))
        w = np.clip(w, 0.0, self.cap)
        return (v * w) @ v.T

    def dykstra(self, Z, sweeps: int, tol: float = 1e-10):
        x = Z
        p = np.zeros_like(Z)
        q = np.zeros_like(Z)
        for _ in range(sweeps):
            y = self.affine(x + p)
            p = x + p - y
            x_new = self.spectral(y + q)
            q = y + q - x_new
            done = np.max(np.abs(x_new - x)) < tol
            x = x_new
            if done:
                break
        return x

    def restore(self, Z):
        """Exactly feasible point: fix the diagonal, then mix with the CR matrix."""
        n = self.n
        y = self.affine(Z)
        y = 0.5 * (y + y.T)
        w = np.linalg.eigvalsh(y)
        base = n / (n - 1.0)
        alpha = 0.0
        if w[0] < 0:
            alpha = max(alpha, -w[0] / (base - w[0]))
        if w[-1] > self.cap:
            gap = self.cap - base
            if gap <= 0:
                return base * np.eye(n - 1)
            alpha = max(alpha, (w[-1] - self.cap) / (w[-1] - base))
        if alpha > 0:
            # a small margin absorbs rounding in the eigenvalue bounds
            alpha = min(1.0, alpha * (1 + 1e-9) + 1e-14)
        return (1.0 - alpha) * y + alpha * base * np.eye(n - 1)


def algorithm1_pmatrix(K, rho: float = math.inf, max_iter: int = 2000, dykstra_sweeps: int = 200,
                       tol: float = FEAS_TOL, patience: int = 20) -> PMatrixResult:
    """P-matrix minimizing lambda_max(sqrt(K) P sqrt(K)) over the relaxed feasible set.

    Feasible set: P PSD, diag(P) = 1, P e = 0, (1 - 1/n) lambda_max(P) <= rho.  The
    returned P is the best feasible iterate; the search starts at complete randomization.
    """
    if rho < 1:
        raise InfeasibleError(f"rho={rho} is below 1, no design can satisfy it")
    K = as_symmetric(K, "K")
    n = K.shape[0]
    if n % 2 or n < 2:
        raise InputError("need an even number of subjects", module="mixed_opt")
    R = psd_sqrt(K)
    if n == 2:
        P = p_matrix_cr(2)
        obj = float(np.linalg.eigvalsh(R @ P @ R)[-1])
        return PMatrixResult(P, obj, 1.0, 0, True, [obj])
    cap = min(rho, n - 1.0) * n / (n - 1.0)
    proj = _Projector(n, cap)
    Q = proj.Q
    B = R @ Q
    base = n / (n - 1.0)
    Z = base * np.eye(n - 1)

    def obj_and_grad(Z):
        M = B @ Z @ B.T
        w, v = np.linalg.eigh(0.5 * (M + M.T))
        g = B.T @ v[:, -1]
        return float(w[-1]), np.outer(g, g)

    best_Z = Z
    best_val, grad = obj_and_grad(Z)
    history = [best_val]
    if rho <= 1.0 + 1e-12 or best_val <= 0:
        P = Q @ best_Z @ Q.T
        return PMatrixResult(P, best_val, 1.0, 0, True, history)
    # constant step, halved (restarting from the best iterate) whenever progress stalls
    step = 0.5 * base
    stall = 0
    converged = False
    for k in range(max_iter):
        gnorm = np.linalg.norm(grad)
        if gnorm <= 0:
            converged = True
            break
        trial = proj.dykstra(Z - step * grad / gnorm, dykstra_sweeps)
        Z = proj.restore(trial)
        val, grad = obj_and_grad(Z)
        if val < best_val - tol * 1e-3 * max(1.0, abs(best_val)):
            best_val, best_Z = val, Z
            stall = 0
        else:
            if val < best_val:
                best_val, best_Z = val, Z
            stall += 1
        history.append(best_val)
        if stall >= patience:
            step *= 0.5
            stall = 0
            Z = best_Z
            val, grad = obj_and_grad(Z)
            if step < tol * 1e-2 * base:
                converged = True
                break
    P = Q @ best_Z @ Q.T
    P = 0.5 * (P + P.T)
    ratio = (1.0 - 1.0 / n) * float(np.linalg.eigvalsh(P)[-1])
    return PMatrixResult(P, best_val, ratio, len(history) - 1, converged, history)


def sample_sign_gaussian(P, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Labels from the median split of v ~ N(0, P): the larger half gets label 0."""
    P = as_symmetric(P, "P")
    n = P.shape[0]
    if n % 2:
        raise InputError("need an even number of subjects", module="mixed_opt")
    L = cholesky_psd(P)
    k = 1 if size is None else int(size)
    v = rng.standard_normal((k, n)) @ L.T
    v = v + rng.uniform(0.0, 1e-12, size=v.shape)
    ranks = np.argsort(np.argsort(-v, axis=1, kind="stable"), axis=1)
    labels = np.where(ranks < n // 2, 0, 1).astype(np.int64)
    return labels[0] if size is None else labels


def algorithm1_design(K, rho: float = math.inf, rng: np.random.Generator | None = None,
                      check_draws: int = 0, **opts) -> DesignDistribution:
    """Design sampling the sign-Gaussian rounding of the relaxed P-matrix.

    With ``check_draws > 0`` the realized P-matrix of the sampler is estimated and
    stored in ``meta`` next to the relaxed solution.
    """
    res = algorithm1_pmatrix(K, rho, **opts)
    P_hat = res.P
    L = cholesky_psd(P_hat)
    n = P_hat.shape[0]

    def sampler(r: np.random.Generator, size: int) -> np.ndarray:
        v = r.standard_normal((size, n)) @ L.T + r.uniform(0.0, 1e-12, size=(size, n))
        ranks = np.argsort(np.argsort(-v, axis=1, kind="stable"), axis=1)
        return np.where(ranks < n // 2, 0, 1).astype(np.int64)

    meta = {"p_hat": P_hat, "objective": res.objective, "relaxed_ratio": res.ratio, "converged": res.converged}
    design = DesignDistribution(n=n, m=2, sampler=sampler, name="sign_gaussian", meta=meta)
    if check_draws and rng is not None:
        rows = design.sample(rng, check_draws)
        meta["p_realized"] = p_matrix_from_support(rows, np.full(check_draws, 1.0 / check_draws), 2)
    return design
