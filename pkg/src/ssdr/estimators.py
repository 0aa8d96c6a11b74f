"""Five precision-matrix estimators behind one interface.

Each estimator maps a ClassSummary to an estimate of the class precision
matrix (inverse covariance):

* ``sample_inverse`` -- the plain inverse of the ML covariance (baseline).
* ``haff``           -- the empirical Bayes shrinkage estimator of
                        Haff (1979), pulling toward a scaled identity.
* ``wang``           -- the ridge-type estimator of Wang et al. (2015),
                        alpha * (S + beta * I)^-1 with coefficients chosen
                        by minimizing an empirical quadratic loss.
* ``bodnar``         -- the linear shrinkage estimator of Bodnar, Gupta and
                        Parolya (2016) toward a user-specified target.
* ``mry``            -- the penalized log-determinant estimator of Molstad
                        and Rothman (2019): the graphical lasso of Yuan and
                        Lin (2007) in its simple form, or an L1 penalty on
                        A @ Omega @ B - C for structured shrinkage; solved
                        by ADMM with a majorize-minimize update.

All returned matrices are exactly symmetric and positive definite, or a
typed error is raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .datamodel import ClassSummary
from .errors import (
    ConvergenceError,
    DegeneracyError,
    InvalidInputError,
    NotSpdError,
    NumericalDomainError,
    SampleSizeError,
)
from .numerics import spd_cholesky, spd_logdet_and_inverse, sym_eigen, symmetrize

KINDS = ("sample_inverse", "haff", "wang", "bodnar", "mry")
MRY_PENALTIES = ("simple", "qda")
BODNAR_TARGETS = ("identity", "diagonal_of_s")


@dataclass(frozen=True)
class PrecisionEstimatorSpec:
    """Which estimator to apply, with its tuning parameters.

    ``bodnar_target`` is "identity", "diagonal_of_s" (diag of the sample
    covariance), or an explicit symmetric matrix. For ``mry``,
    ``mry_penalty`` selects the simple graphical-lasso penalty (A = B = I,
    C = 0) or the QDA-oriented structured penalty with A^T = B =
    (mean, gamma * I) and C = 0; ``mry_standardize_mean`` z-scores the mean
    vector's entries before building those matrices.
    """

    kind: str = "sample_inverse"
    mry_lambda: float = 0.1
    mry_penalty: str = "simple"
    mry_gamma: float = 1.0
    mry_standardize_mean: bool = False
    bodnar_target: object = "identity"
    wang_grid_size: int = 1000
    spd_repair_eps: float = 1e-8
    admm_max_iters: int = 10_000
    admm_tol: float = 1e-6
    admm_rho: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "mry":
            if not self.mry_lambda > 0:
                raise InvalidInputError(
                    f"mry lambda must be > 0, got {self.mry_lambda}"
                )
            if self.mry_penalty not in MRY_PENALTIES:
                raise InvalidInputError(
                    f"unknown mry penalty {self.mry_penalty!r}"
                )
            if self.mry_penalty == "qda" and not self.mry_gamma > 0:
                raise InvalidInputError(
                    f"mry gamma must be > 0, got {self.mry_gamma}"
                )
        if isinstance(self.bodnar_target, str):
            if self.bodnar_target not in BODNAR_TARGETS:
                raise InvalidInputError(
                    f"unknown bodnar target {self.bodnar_target!r}"
                )
        if self.wang_grid_size < 2:
            raise InvalidInputError("wang_grid_size must be >= 2")
        if not self.spd_repair_eps > 0:
            raise InvalidInputError("spd_repair_eps must be > 0")

    def with_lambda(self, lam: float) -> "PrecisionEstimatorSpec":
        return replace(self, mry_lambda=float(lam))


@dataclass
class EstimateDiagnostics:
    """Solver/shrinkage bookkeeping attached to every estimate."""

    iterations: int = 0
    kkt_residual: float | None = None
    shrinkage_coefficients: dict = field(default_factory=dict)
    repaired: bool = False
    mean_quadratic: float | None = None  # mean' Omega mean, QDA-penalty diagnostic


@dataclass
class PrecisionEstimate:
    omega: np.ndarray
    diagnostics: EstimateDiagnostics


def sample_inverse(cs: ClassSummary) -> PrecisionEstimate:
    """Inverse of the ML sample covariance. No repair: singular input raises."""
    _, inv = spd_logdet_and_inverse(cs.cov)
    return PrecisionEstimate(omega=symmetrize(inv),
                             diagnostics=EstimateDiagnostics())


def haff(cs: ClassSummary) -> PrecisionEstimate:
    """Haff (1979) shrinkage toward a scaled identity.

    Requires n_i > p + 2 so the leading coefficient (n_i - p - 2) is
    positive. The mixing weight t(U) in [0, 1] is driven by the eigenvalue
    disparity ratio U (geometric over arithmetic mean of the eigenvalues of
    the sample covariance); equal eigenvalues give U = 1.
    """
    n, p = cs.n_i, cs.p
    if n <= p + 2:
        raise SampleSizeError(
            f"haff requires n_i > p + 2 (got n_i={n}, p={p})",
        )
    logdet, s_inv = spd_logdet_and_inverse(cs.cov)
    trace = float(np.trace(cs.cov))
    disparity = p * np.exp(logdet / p) / trace
    t = min(4.0 * (p * p - 1.0) / ((n - p - 2.0) * p * p), 1.0) \
        * disparity ** (1.0 / p)
    omega = (1.0 - t) * (n - p - 2.0) * s_inv \
        + t * (p * n - p - 2.0) / trace * np.eye(p)
    diag = EstimateDiagnostics(
        shrinkage_coefficients={"t": float(t), "disparity": float(disparity)},
    )
    return PrecisionEstimate(omega=symmetrize(omega), diagnostics=diag)


def _wang_loss(beta, evals, p, n):
    """Empirical loss L(beta) and the ratio R1/R2 at beta.

    Works on an array of beta values; evals are the eigenvalues of the
    sample covariance. Returns (L, R1, R2); entries where the denominator
    1 - (p/n) a1 or R2 is non-positive are set to +inf in L.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    h = beta[:, None] / (evals[None, :] + beta[:, None])  # (g, p)
    a1 = 1.0 - h.mean(axis=1)
    a2 = (h * (1.0 - h)).mean(axis=1)
    denom = 1.0 - (p / n) * a1
    bad = denom <= 0
    denom = np.where(bad, 1.0, denom)
    r1 = a1 / denom
    r2 = a1 / denom**3 - a2 / denom**4
    bad |= r2 <= 0
    loss = np.where(bad, np.inf, 1.0 - r1**2 / np.where(r2 <= 0, 1.0, r2))
    return loss, r1, r2, bad


def wang(cs: ClassSummary, grid_size: int = 1000) -> PrecisionEstimate:
    """Wang et al. (2015) ridge-type estimator alpha * (S + beta * I)^-1.

    beta minimizes the empirical loss over [lambda_min(S), lambda_max(S)],
    located on a log-spaced grid of ``grid_size`` points and refined by
    bisection around the grid minimum; ties go to the smallest beta.
    """
    n, p = cs.n_i, cs.p
    evals, _ = sym_eigen(cs.cov)
    lam_max, lam_min = float(evals[0]), float(evals[-1])
    if lam_min <= 0:
        raise NotSpdError(
            f"sample covariance has nonpositive eigenvalue {lam_min}",
        )
    if lam_max == lam_min:
        grid = np.array([lam_min])
    else:
        grid = np.geomspace(lam_min, lam_max, grid_size)
    loss, _, _, bad = _wang_loss(grid, evals, p, n)
    if np.all(bad):
        raise NumericalDomainError(
            "empirical loss undefined on the whole search interval "
            "(denominator sign flip)"
        )
    idx = int(np.argmin(loss))  # first minimum -> smallest beta on ties
    beta = float(grid[idx])
    if grid.size > 1:
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, grid.size - 1)]
        # bisection refinement on the bracketing interval
        for _ in range(60):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            l1, _, _, b1 = _wang_loss(np.array([m1]), evals, p, n)
            l2, _, _, b2 = _wang_loss(np.array([m2]), evals, p, n)
            if l1[0] <= l2[0]:
                hi = m2
            else:
                lo = m1
        cand = (lo + hi) / 2.0
        lc, _, _, bc = _wang_loss(np.array([cand]), evals, p, n)
        if not bc[0] and lc[0] < loss[idx]:
            beta = float(cand)
    loss_b, r1, r2, bad_b = _wang_loss(np.array([beta]), evals, p, n)
    if bad_b[0]:
        raise NumericalDomainError(f"loss undefined at beta={beta}")
    alpha = float(r1[0] / r2[0])
    if not alpha > 0:
        raise NumericalDomainError(f"nonpositive shrinkage alpha={alpha}")
    _, inv = spd_logdet_and_inverse(cs.cov + beta * np.eye(p))
    diag = EstimateDiagnostics(
        shrinkage_coefficients={"alpha": alpha, "beta": beta},
    )
    return PrecisionEstimate(omega=symmetrize(alpha * inv), diagnostics=diag)


def _trace_norm(a: np.ndarray) -> float:
    """Sum of singular values (for symmetric input: sum of |eigenvalues|)."""
    return float(np.abs(np.linalg.eigvalsh(symmetrize(a))).sum())


def bodnar(cs: ClassSummary, target="identity",
           repair_eps: float = 1e-8) -> PrecisionEstimate:
    """Bodnar, Gupta and Parolya (2016) linear shrinkage toward a target.

    The estimate alpha * S^-1 + beta * Omega_0 can be indefinite in finite
    samples; when that happens its eigenvalues are clipped at
    repair_eps * lambda_max and the repair is flagged in diagnostics.
    Raises DegeneracyError when S^-1 is proportional to the target (the
    coefficient denominator vanishes); fall back to sample_inverse then.
    """
    n, p = cs.n_i, cs.p
    _, s_inv = spd_logdet_and_inverse(cs.cov)
    if isinstance(target, str):
        if target == "identity":
            omega0 = np.eye(p)
        elif target == "diagonal_of_s":
            omega0 = np.diag(np.diag(np.asarray(cs.cov)))
        else:
            raise InvalidInputError(f"unknown bodnar target {target!r}")
    else:
        omega0 = symmetrize(target, "bodnar target")
        if omega0.shape != (p, p):
            raise InvalidInputError(
                f"bodnar target shape {omega0.shape} != ({p}, {p})"
            )
    fro_sinv = float(np.sum(s_inv * s_inv))
    fro_om0 = float(np.sum(omega0 * omega0))
    cross = float(np.sum(s_inv * omega0))  # tr(S^-1 Omega_0)
    denom = fro_sinv * fro_om0 - cross * cross
    if denom <= 1e-12 * fro_sinv * fro_om0:
        raise DegeneracyError(
            "shrinkage target is (numerically) proportional to S^-1; "
            "coefficients are undefined -- fall back to sample_inverse"
        )
    alpha = 1.0 - p / n - (_trace_norm(s_inv) ** 2 * fro_om0) / (n * denom)
    beta = cross / fro_om0 * (1.0 - p / n - alpha)
    omega = symmetrize(alpha * s_inv + beta * omega0)
    vals, vecs = sym_eigen(omega)
    repaired = False
    if vals[-1] <= 0:
        floor = repair_eps * max(float(vals[0]), repair_eps)
        clipped = np.maximum(vals, floor)
        omega = symmetrize((vecs * clipped) @ vecs.T)
        repaired = True
    diag = EstimateDiagnostics(
        shrinkage_coefficients={
            "alpha": float(alpha),
            "beta": float(beta),
            "target_trace_norm_over_p": _trace_norm(omega0) / p,
        },
        repaired=repaired,
    )
    return PrecisionEstimate(omega=omega, diagnostics=diag)


def _soft_threshold_offdiag(m: np.ndarray, thr: float) -> np.ndarray:
    """Entrywise soft threshold sparing the diagonal."""
    out = np.sign(m) * np.maximum(np.abs(m) - thr, 0.0)
    np.fill_diagonal(out, np.diag(m))
    return out


def _logdet_prox(e: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve t * Omega - Omega^-1 = E for SPD Omega.

    Returns (Omega, Omega^-1), both from one symmetric eigendecomposition.
    """
    w, q = np.linalg.eigh(symmetrize(e))
    om_w = (w + np.sqrt(w * w + 4.0 * t)) / (2.0 * t)
    omega = (q * om_w) @ q.T
    omega_inv = (q / om_w) @ q.T
    return symmetrize(omega), symmetrize(omega_inv)


def mry(cs: ClassSummary, spec: PrecisionEstimatorSpec,
        warm_start: np.ndarray | None = None) -> PrecisionEstimate:
    """Penalized log-determinant precision estimate, solved by ADMM.

    Minimizes ``tr(S Omega) - log|Omega| + lambda * |A Omega B - C|_1`` over
    SPD Omega, where the L1 norm sums absolute values of off-diagonal
    entries only. The splitting variable is Z = A Omega B - C. The Omega
    update is the standard log-determinant proximal step in simple mode; in
    qda mode the same proximal step solves the subproblem exactly after a
    change of variables Theta = L' Omega L, where L L' = B B' (the
    subproblem's quadratic term is the B B'-weighted Frobenius norm). The Z
    update soft thresholds off-diagonal entries; the penalty parameter is
    rebalanced (x2 / /2) whenever the primal/dual residual ratio exceeds 10.

    Accepts singular (PSD) sample covariances, which is what makes the
    estimator usable when n_i <= p.

    Returns the sparse splitting iterate when it is SPD; otherwise returns
    the SPD proximal iterate and sets diagnostics.repaired.
    """
    if spec.kind != "mry":
        raise InvalidInputError(f"spec.kind must be 'mry', got {spec.kind!r}")
    lam = float(spec.mry_lambda)
    if not lam > 0:
        raise InvalidInputError(f"lambda must be > 0, got {lam}")
    s = symmetrize(cs.cov)
    p = s.shape[0]
    simple = spec.mry_penalty == "simple"

    if simple:
        b = l_inv = None
    else:
        mean = np.asarray(cs.mean, dtype=float)
        if spec.mry_standardize_mean:
            sd = float(mean.std(ddof=1)) if mean.size > 1 else 0.0
            if sd > 0:
                mean = (mean - mean.mean()) / sd
        b = np.column_stack([mean, spec.mry_gamma * np.eye(p)])  # (p, p+1)
        l_fac = spd_cholesky(b @ b.T)
        l_inv = solve_triangular(l_fac, np.eye(p), lower=True)

    rho = float(spec.admm_rho)
    tol = float(spec.admm_tol)
    max_iters = int(spec.admm_max_iters)

    if warm_start is not None:
        omega = symmetrize(np.asarray(warm_start, dtype=float))
    else:
        omega = np.diag(1.0 / np.maximum(np.diag(s), 1e-8))
    z = omega.copy() if simple else symmetrize(b.T @ omega @ b)
    u = np.zeros_like(z)

    omega_inv = None
    primal = dual = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        if simple:
            e = rho * (z - u) - s
            omega, omega_inv = _logdet_prox(e, rho)
            azb = omega
        else:
            # exact update: rho*Theta - Theta^-1 = L^-1 (rho*B(Z-U)B' - S) L^-T
            g = b @ (z - u) @ b.T
            e = l_inv @ (rho * g - s) @ l_inv.T
            theta, theta_inv = _logdet_prox(e, rho)
            omega = symmetrize(l_inv.T @ theta @ l_inv)
            omega_inv = symmetrize(l_fac @ theta_inv @ l_fac.T)
            azb = symmetrize(b.T @ omega @ b)

        z_prev = z
        z = _soft_threshold_offdiag(azb + u, lam / rho)
        u = u + azb - z

        primal = float(np.linalg.norm(azb - z))
        dz = z - z_prev
        if simple:
            dual = rho * float(np.linalg.norm(dz))
        else:
            dual = rho * float(np.linalg.norm(b @ dz @ b.T))
        if max(primal, dual) < tol:
            break
        if primal > 10.0 * dual and dual > 0:
            rho *= 2.0
            u /= 2.0
        elif dual > 10.0 * primal and primal > 0:
            rho /= 2.0
            u *= 2.0
    else:
        raise ConvergenceError(
            f"ADMM did not converge in {max_iters} iterations "
            f"(primal={primal:.3e}, dual={dual:.3e})",
            primal=primal, dual=dual, iterations=max_iters,
        )

    # KKT stationarity with the converged (unscaled) dual rho * U; the
    # Z-step makes rho * U an exact subgradient of lambda * |Z|_1.
    y = rho * u
    if simple:
        stat = s - omega_inv + y
    else:
        stat = s - omega_inv + b @ y @ b.T
    kkt = max(float(np.max(np.abs(stat))), primal)

    repaired = False
    if simple:
        out = symmetrize(z)
        if np.linalg.eigvalsh(out)[0] <= 0:
            out = symmetrize(omega)
            repaired = True
    else:
        out = symmetrize(omega)

    diag = EstimateDiagnostics(
        iterations=it,
        kkt_residual=kkt,
        shrinkage_coefficients={"lambda": lam} if simple else
        {"lambda": lam, "gamma": float(spec.mry_gamma)},
        repaired=repaired,
        mean_quadratic=float(cs.mean @ out @ cs.mean),
    )
    return PrecisionEstimate(omega=out, diagnostics=diag)


def estimate(cs: ClassSummary, spec: PrecisionEstimatorSpec) -> PrecisionEstimate:
    """Dispatch to the estimator named by spec.kind.

    Guarantees an exactly symmetric SPD omega or a typed error.
    """
    if spec.kind == "sample_inverse":
        return sample_inverse(cs)
    if spec.kind == "haff":
        return haff(cs)
    if spec.kind == "wang":
        return wang(cs, grid_size=spec.wang_grid_size)
    if spec.kind == "bodnar":
        return bodnar(cs, target=spec.bodnar_target,
                      repair_eps=spec.spd_repair_eps)
    if spec.kind == "mry":
        return mry(cs, spec)
    raise InvalidInputError(f"unknown estimator kind {spec.kind!r}")
