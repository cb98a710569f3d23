"""Constrained optimization over covariant channels.

Three optimizers share one geometric core, project_covariant_tp_psd:
Dykstra alternating projections between the PSD cone and the affine set
of sector-dephased, trace-preserving Choi matrices.  The affine
projection composes two commuting orthogonal projections (dephasing
across generator sectors, then the trace-preservation correction
J -> J + (1/d_out) I (x) (I - Tr_out J)), so their composition is the
exact projection onto the intersection; tests verify order independence
and idempotence.

The recovery-fidelity maximization is a concave objective on a convex
set, so projected gradient ascent with backtracking converges to the
global maximum; multi-restart agreement is used as the convergence
certificate.  When it fails, the best value is still a certified lower
bound on the fidelity (upper bound on the irreversibility), which is the
safe direction for every check in the experiments module.

Matrix inverses are regularized at eps = 1e-10; each regularized call is
logged through the standard logging module.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, SingularPrior, SingularTarget
from .linalg import (
    dagger,
    hermitian_eig,
    max_abs,
    partial_trace,
    pinv_sqrt,
    psd_sqrt,
    tensor_product,
    trace_norm,
)
from .qtypes import (
    Channel,
    DensityMatrix,
    SystemSpec,
    adjoint_apply_choi,
    apply_choi,
    choi_from_map,
    tensor_system,
)
from .symmetry import CovarianceSector, random_covariant_channel

logger = logging.getLogger(__name__)

REG_EPS = 1e-10

__all__ = [
    "OptimizerConfig",
    "IrrevResult",
    "BroadcastAttempt",
    "project_covariant_tp_psd",
    "fidelity_gradient",
    "max_recovery_fidelity",
    "petz_recovery",
    "optimize_broadcast",
    "DEFAULT_LAMBDA_SCHEDULE",
]

DEFAULT_LAMBDA_SCHEDULE = (0.0, 1.0, 4.0, 16.0, 64.0, 256.0)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 2000
    tol: float = 1e-8
    restarts: int = 5
    seed: int = 0
    projection_max_iter: int = 5000
    projection_tol: float = 1e-11
    smoothing: float = 1e-6


@dataclass(frozen=True, eq=False)
class IrrevResult:
    """Outcome of the covariant-recovery maximization.

    value = 1 - (best fidelity)^2; the fidelity trace is nondecreasing
    (monotone ascent under backtracking); converged means the restarts
    agreed within 1e-4.
    """

    value: float
    best_recovery: Channel
    fidelity_trace: tuple[tuple[int, float], ...]
    converged: bool

    @property
    def fidelity(self) -> float:
        return float(np.sqrt(max(0.0, 1.0 - self.value)))


@dataclass(frozen=True, eq=False)
class BroadcastAttempt:
    """One feasible covariant broadcast map with its frontier coordinates.

    Lower-bound witness only: the coherence moved to the second output at
    the achieved marginal disturbance, never claimed optimal.
    """

    map: Channel
    marginal_disturbance: float
    output_coherence: float
    lam: float
    converged: bool


def project_covariant_tp_psd(
    j: np.ndarray,
    in_sys: SystemSpec,
    out_sys: SystemSpec,
    max_iter: int = 5000,
    tol: float = 1e-11,
) -> np.ndarray:
    """Project a Hermitian matrix onto the covariant-TP-PSD Choi set.

    Dykstra alternating projections between the PSD cone (eigenvalue
    clipping) and the affine set {sector-dephased} intersect {Tr_out = I}.
    Raises NoConvergence with the final residual if the iterate has not
    settled after max_iter rounds.
    """
    di, do = in_sys.dim, out_sys.dim
    sec = CovarianceSector.for_channel(out_sys, in_sys)
    eye_in = np.eye(di, dtype=np.complex128)
    eye_out = np.eye(do, dtype=np.complex128)

    def affine(x):
        x = sec.dephase(x)
        marg = partial_trace(x, [do, di], keep=[1])
        return x + tensor_product(eye_out, eye_in - marg) / do

    def psd(x):
        w, v = hermitian_eig((x + dagger(x)) / 2)
        return (v * np.maximum(w, 0.0)) @ dagger(v)

    x = (np.asarray(j, dtype=np.complex128) + dagger(j)) / 2
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    prev = x
    for _ in range(max_iter):
        y = psd(x + p)
        p = x + p - y
        x = affine(y + q)
        q = y + q - x
        change = max_abs(x - prev)
        w_min = float(np.linalg.eigvalsh((x + dagger(x)) / 2)[0])
        if change <= tol and w_min >= -100 * tol:
            return (x + dagger(x)) / 2
        prev = x
    raise NoConvergence(
        f"Dykstra projection stalled (last change {change:.3e})", residual=change
    )


def fidelity_gradient(rho_target: DensityMatrix, x: DensityMatrix | np.ndarray) -> np.ndarray:
    """Gradient G of X -> Fid(rho, X): Fid(rho, X + delta) ~ Fid + Tr(G delta).

    G = (1/2) sqrt(rho) (sqrt(rho) X sqrt(rho))^{-1/2} sqrt(rho) with the
    inverse square root taken on the support; near-singular targets are
    ridge-regularized at eps = 1e-10 and SingularTarget is raised when the
    retained spectrum is conditioned worse than 1e14.
    """
    x_mat = x.mat if isinstance(x, DensityMatrix) else np.asarray(x, dtype=np.complex128)
    root = psd_sqrt(rho_target.mat)
    mid = root @ x_mat @ root
    mid = (mid + dagger(mid)) / 2
    w = np.linalg.eigvalsh(mid)
    if w[0] < REG_EPS:
        logger.info("fidelity_gradient: ridge-regularizing target with eps=%g", REG_EPS)
        mid = mid + REG_EPS * np.eye(mid.shape[0])
    inv_root, _, cond = pinv_sqrt(mid)
    if cond > 1e14:
        raise SingularTarget(
            f"sqrt(rho) X sqrt(rho) condition number {cond:.3e} exceeds 1e14"
        )
    g = 0.5 * (root @ inv_root @ root)
    return (g + dagger(g)) / 2


def _fidelity_raw(a: np.ndarray, b: np.ndarray) -> float:
    val = trace_norm(psd_sqrt(a) @ psd_sqrt(b))
    return float(min(1.0, max(0.0, val)))


def _ascend(
    j0: np.ndarray,
    objective,
    gradient,
    in_sys: SystemSpec,
    out_sys: SystemSpec,
    cfg: OptimizerConfig,
):
    """Projected gradient ascent with backtracking; returns (J, trace, value)."""
    project = lambda m: project_covariant_tp_psd(
        m, in_sys, out_sys, cfg.projection_max_iter, cfg.projection_tol
    )
    j = project(j0)
    val = objective(j)
    trace = [(0, val)]
    step = 1.0
    for it in range(1, cfg.max_iter + 1):
        grad = gradient(j)
        improved = False
        for _ in range(40):
            try:
                cand = project(j + step * grad)
            except NoConvergence:
                step *= 0.5
                continue
            cand_val = objective(cand)
            if cand_val > val:
                improved = True
                break
            step *= 0.5
            if step < 1e-14:
                break
        if not improved:
            break
        rel = (cand_val - val) / max(abs(val), 1e-12)
        j, val = cand, cand_val
        trace.append((it, val))
        step = min(step * 1.5, 1e3)
        if 0 <= rel < cfg.tol:
            break
    return j, trace, val


def max_recovery_fidelity(
    rho_q: DensityMatrix,
    sigma: DensityMatrix,
    from_sys: SystemSpec,
    to_sys: SystemSpec,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> IrrevResult:
    """Maximize Fid(rho_Q, R(sigma)) over covariant channels R: from -> to.

    Projected gradient ascent on the Choi matrix of R; the objective is
    concave on the convex covariant-TP-PSD set, so the converged value is
    the global maximum within tolerance.  Restarts must agree within 1e-4
    for converged=True; value = 1 - fidelity^2 either way (a failed run
    still gives a valid upper bound on the irreversibility).
    """
    if sigma.dim != from_sys.dim or rho_q.dim != to_sys.dim:
        from .errors import DimensionMismatch

        raise DimensionMismatch("state dimensions do not match the recovery spaces")

    sigma_t = sigma.mat.T.copy()

    def objective(j):
        return _fidelity_raw(rho_q.mat, apply_choi(j, to_sys.dim, from_sys.dim, sigma.mat))

    def gradient(j):
        out = apply_choi(j, to_sys.dim, from_sys.dim, sigma.mat)
        g = fidelity_gradient(rho_q, (out + dagger(out)) / 2)
        return tensor_product(g, sigma_t)

    seeds = np.random.SeedSequence(cfg.seed).spawn(max(1, cfg.restarts))
    best = None
    finals = []
    for idx, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        if idx == 0 and from_sys.dim == to_sys.dim:
            start = CovarianceSector.for_channel(to_sys, from_sys).dephase(
                choi_from_map(lambda m: m, from_sys.dim, to_sys.dim)
            )
        else:
            start = random_covariant_channel(from_sys, to_sys, rng).choi
        j, trace, val = _ascend(start, objective, gradient, from_sys, to_sys, cfg)
        finals.append(val)
        if best is None or val > best[2]:
            best = (j, trace, val)
    j, trace, val = best
    converged = (max(finals) - min(finals)) <= 1e-4
    recovery = Channel(from_sys, to_sys, j)
    return IrrevResult(
        value=1.0 - val * val,
        best_recovery=recovery,
        fidelity_trace=tuple(trace),
        converged=converged,
    )


def petz_recovery(ch: Channel, prior: DensityMatrix) -> Channel:
    """Transpose channel of ch with respect to a prior state.

    X -> sqrt(prior) ch†( ch(prior)^{-1/2} X ch(prior)^{-1/2} ) sqrt(prior),
    assembled at the Choi level.  If ch(prior) is rank deficient the map
    is completed on the orthogonal complement by preparing the prior, so
    the result is always trace preserving.  Raises SingularPrior when the
    prior itself is numerically singular beyond regularization.
    """
    if prior.dim != ch.input.dim:
        from .errors import DimensionMismatch

        raise DimensionMismatch("prior dimension != channel input dimension")
    di, do = ch.input.dim, ch.output.dim
    prior_mat = prior.mat
    w = np.linalg.eigvalsh(prior_mat)
    if w[0] < REG_EPS:
        logger.info("petz_recovery: regularizing prior with eps=%g", REG_EPS)
        prior_mat = (prior_mat + REG_EPS * np.eye(di)) / (1.0 + di * REG_EPS)
    if np.linalg.eigvalsh(prior_mat)[0] <= 0:
        raise SingularPrior("prior has nonpositive eigenvalues after regularization")
    root_prior = psd_sqrt(prior_mat)
    out_state = apply_choi(ch.choi, do, di, prior_mat)
    out_state = (out_state + dagger(out_state)) / 2
    inv_root_out, support, _ = pinv_sqrt(out_state)
    complement = np.eye(do) - support

    def petz_map(x):
        core = root_prior @ adjoint_apply_choi(
            ch.choi, do, di, inv_root_out @ x @ inv_root_out
        ) @ root_prior
        leak = complex(np.trace(complement @ x))
        return core + leak * prior_mat

    j = choi_from_map(petz_map, do, di)
    j = (j + dagger(j)) / 2
    return Channel(ch.output, ch.input, j)


def optimize_broadcast(
    rho_q: DensityMatrix,
    sys_q: SystemSpec,
    sys_sp: SystemSpec,
    t: float,
    lambda_schedule=DEFAULT_LAMBDA_SCHEDULE,
    cfg: OptimizerConfig = OptimizerConfig(max_iter=400),
) -> list[BroadcastAttempt]:
    """Frontier of covariant broadcast attempts Q -> Q (x) S'.

    For each penalty lam, ascends measure_ft(sigma_S', t)
    - lam * ||sigma_Q - rho_Q||_1 over covariant Choi matrices by
    (sub)gradient ascent with a smoothed trace norm, warm-starting each
    penalty from the previous solution plus fixed feasible seeds.  Every
    returned attempt is a feasible covariant channel (a lower-bound
    witness for the frontier); non-converged points are flagged.
    """
    dq, dsp = sys_q.dim, sys_sp.dim
    out_sys = tensor_system(sys_q, sys_sp)
    mu = cfg.smoothing
    u_t = sys_sp.translation(t)

    def marginals(j):
        joint = apply_choi(j, out_sys.dim, dq, rho_q.mat)
        joint = (joint + dagger(joint)) / 2
        sig_q = partial_trace(joint, [dq, dsp], keep=[0])
        sig_sp = partial_trace(joint, [dq, dsp], keep=[1])
        return sig_q, sig_sp

    def smooth_tn(y):
        w = np.linalg.eigvalsh((y + dagger(y)) / 2)
        return float(np.sum(np.sqrt(w * w + mu * mu)))

    def ft_term(sig_sp):
        shifted = u_t @ sig_sp @ dagger(u_t)
        return 1.0 - _fidelity_raw(sig_sp, shifted)

    def objective_factory(lam):
        def objective(j):
            sig_q, sig_sp = marginals(j)
            return ft_term(sig_sp) - lam * smooth_tn(sig_q - rho_q.mat)

        return objective

    def gradient_factory(lam):
        def gradient(j):
            sig_q, sig_sp = marginals(j)
            shifted = u_t @ sig_sp @ dagger(u_t)
            return _broadcast_gradient(
                rho_q, sig_q, sig_sp, shifted, u_t, lam, mu, dq, dsp
            )

        return gradient

    # Fixed feasible seeds: keep-and-prepare (marginal preserving) and,
    # when the dimensions allow, move-and-refill (coherence forwarding).
    eye_q = np.eye(dq, dtype=np.complex128)
    keep_seed = choi_from_map(
        lambda m: tensor_product(m, np.eye(dsp, dtype=np.complex128) / dsp), dq, out_sys.dim
    )
    seeds_fixed = [keep_seed]
    if dq == dsp:
        move_seed = choi_from_map(
            lambda m: tensor_product(eye_q / dq, m), dq, out_sys.dim
        )
        seeds_fixed.append(move_seed)

    attempts: list[BroadcastAttempt] = []
    warm = None
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    for pos, lam in enumerate(lambda_schedule):
        objective = objective_factory(lam)
        gradient = gradient_factory(lam)
        starts = []
        if warm is not None:
            starts.append(warm)
        starts.append(keep_seed)
        if pos == 0:
            # Exploration only pays off before the warm-start chain exists.
            starts.extend(seeds_fixed[1:])
            starts.append(random_covariant_channel(sys_q, out_sys, rng).choi)
        best = None
        for start in starts:
            try:
                j, trace, val = _ascend(start, objective, gradient, sys_q, out_sys, cfg)
                ok = True
            except NoConvergence:
                continue
            if best is None or val > best[1]:
                best = (j, val, ok)
        if best is None:
            raise NoConvergence(f"no broadcast ascent succeeded at lambda={lam}")
        j, _, converged = best
        warm = j
        sig_q, sig_sp = marginals(j)
        attempts.append(
            BroadcastAttempt(
                map=Channel(sys_q, out_sys, j),
                marginal_disturbance=0.5 * trace_norm(sig_q - rho_q.mat),
                output_coherence=float(min(1.0, max(0.0, ft_term(sig_sp)))),
                lam=float(lam),
                converged=converged,
            )
        )
    return attempts


def _broadcast_gradient(rho_q, sig_q, sig_sp, shifted, u_t, lam, mu, dq, dsp):
    """Gradient of the broadcast objective with respect to the Choi matrix."""
    # d f_t / d sigma_S' : both fidelity slots depend on sigma_S'.
    try:
        ga = fidelity_gradient(DensityMatrix(_renorm(shifted)), _renorm(sig_sp))
        gb = fidelity_gradient(DensityMatrix(_renorm(sig_sp)), _renorm(shifted))
        grad_sp = -(ga + dagger(u_t) @ gb @ u_t)
    except SingularTarget:
        grad_sp = np.zeros((dsp, dsp), dtype=np.complex128)
    # d smooth-trace-norm / d sigma_Q with phi(y) = y / sqrt(y^2 + mu^2).
    y = (sig_q - rho_q.mat + dagger(sig_q - rho_q.mat)) / 2
    w, v = hermitian_eig(y)
    phi = (v * (w / np.sqrt(w * w + mu * mu))) @ dagger(v)
    grad_x = tensor_product(np.eye(dq), grad_sp) - lam * tensor_product(
        phi, np.eye(dsp)
    )
    return tensor_product(grad_x, rho_q.mat.T)


def _renorm(m: np.ndarray) -> np.ndarray:
    m = (m + dagger(m)) / 2
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > 1e-12 and tr > 0:
        m = m / tr
    w, v = hermitian_eig(m)
    w = np.maximum(w, 0.0)
    s = float(np.sum(w))
    if s > 0:
        w = w / s
    return (v * w) @ dagger(v)
