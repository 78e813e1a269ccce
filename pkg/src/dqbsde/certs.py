"""Closed-form certificates and inequality verification.

Everything here is computable from problem data alone, before (or
without) solving: the a priori sup-norm bound for Y, the budget check on
the coefficient integrals, the BMO-type bound for Z (carried in natural
log space because it scales like exp(gamma*lambda)), the contraction
horizon of the frozen-y map, and sample-based falsification of the
structural growth/Lipschitz conditions.

Falsification is deliberately one-sided: the conditions quantify over
unbounded domains, so a found violation is certain while a clean report
is only evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gendsl import EvalEnv, EvalError, Expr, STRUCTURED, eval_expr
from .model import CoefficientFunction, ProblemInstance

_LOG_OVERFLOW = 709.0  # ln of the largest double, minus slack
_VIOLATION_TOL = 1e-9  # absolute slack before a sample counts as a violation


@dataclass(frozen=True)
class Certificate:
    """All closed-form constants derivable from one problem instance."""

    c1: float
    lambda_bound: float        # +inf when only the log form is representable
    lambda_log: float          # natural log of the bound, always finite
    lambda_log_space: bool     # True when lambda_bound overflowed
    ks_integral: float
    h3_budget: float
    h3_satisfied: bool
    bmo_bound_log: float       # natural log of the squared-BMO bound for Z
    contraction_horizon: float  # 1/(2*lip_beta), +inf when lip_beta == 0


# ---------------------------------------------------------------------------
# The logarithmic-growth inequality  C log(1+x) <= x^2 y + y/3 + (C/2) log(1+C/y)
# ---------------------------------------------------------------------------

def check_log_inequality(x: float, y: float, C: float) -> float:
    """Residual (rhs - lhs) of the log-growth inequality; >= 0 when it holds."""
    if x <= 0 or y <= 0 or C <= 0:
        raise ValueError("check_log_inequality needs x, y, C > 0")
    return x * x * y + y / 3.0 + C / 2.0 * math.log1p(C / y) - C * math.log1p(x)


@dataclass(frozen=True)
class LogScanResult:
    min_residual: float
    argmin: tuple                 # (x, y, C)
    stationarity_residual: float  # max over (y,C) slices of |2x* - k/(1+x*)|, k = C/y
    max_argmin_cell_offset: int   # grid cells between the slice argmin and the
    # exact minimizer x0 solving 2*x0^2 + 2*x0 = k (clamped to the grid)
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    cs: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)  # shape (len(xs), len(ys), len(cs))


def _log_axis(spec, name: str) -> np.ndarray:
    lo, hi, count = spec
    if count < 1:
        raise ValueError(f"{name}: empty range")
    if lo <= 0 or hi <= 0:
        raise ValueError(f"{name}: bounds must be positive")
    if lo > hi:
        raise ValueError(f"{name}: inverted range")
    return np.geomspace(lo, hi, int(count))


def scan_log_inequality(x_range, y_range, c_range) -> LogScanResult:
    """Exhaustive residual scan over a log-spaced (x, y, C) grid.

    Besides the global minimum, checks the first-order condition of the
    per-slice minimizer: for fixed (y, C) the residual is strictly convex
    in x with stationary point 2*x0^2 + 2*x0 = C/y, so the grid argmin
    must land within one cell of x0 (or of the grid edge nearest to it).
    """
    xs = _log_axis(x_range, "x")
    ys = _log_axis(y_range, "y")
    cs = _log_axis(c_range, "C")
    X = xs[:, None, None]
    Y = ys[None, :, None]
    C = cs[None, None, :]
    residuals = X * X * Y + Y / 3.0 + C / 2.0 * np.log1p(C / Y) - C * np.log1p(X)

    flat = int(np.argmin(residuals))
    ix, iy, ic = np.unravel_index(flat, residuals.shape)
    min_residual = float(residuals[ix, iy, ic])

    slice_arg = np.argmin(residuals, axis=0)            # (ny, nc)
    xstar = xs[slice_arg]
    k = cs[None, :] / ys[:, None]
    stationarity = np.abs(2.0 * xstar - k / (1.0 + xstar))

    x0 = (-1.0 + np.sqrt(1.0 + 2.0 * k)) / 2.0
    if len(xs) > 1:
        step = (math.log(xs[-1]) - math.log(xs[0])) / (len(xs) - 1)
        j0 = np.rint((np.log(x0) - math.log(xs[0])) / step)
        j0 = np.clip(j0, 0, len(xs) - 1).astype(int)
    else:
        j0 = np.zeros_like(slice_arg)
    offset = int(np.max(np.abs(slice_arg - j0)))

    return LogScanResult(
        min_residual=min_residual,
        argmin=(float(xs[ix]), float(ys[iy]), float(cs[ic])),
        stationarity_residual=float(np.max(stationarity)),
        max_argmin_cell_offset=offset,
        xs=xs, ys=ys, cs=cs, residuals=residuals,
    )


# ---------------------------------------------------------------------------
# A priori sup-norm bound for Y and the coefficient-budget check
# ---------------------------------------------------------------------------

def compute_c1_lambda(n: int, gamma: float, c0: float, T: float) -> tuple:
    """Constants (C1, lambda) of the a priori bound ||Y||_sup <= lambda.

    C1 = (n/gamma) log(2 e^{c0} + 2) + gamma T/3 + n (1 + 2n/gamma)(c0 + 2T) + 3 n c0
    lambda = C1 exp(n c0 (gamma + 2)), returned as +inf past the double range
    (the log form stays available via compute_lambda_log).
    """
    c1 = _c1(n, gamma, c0, T)
    log_lam = math.log(c1) + n * c0 * (gamma + 2.0)
    lam = math.exp(log_lam) if log_lam <= _LOG_OVERFLOW else math.inf
    return c1, lam


def compute_lambda_log(n: int, gamma: float, c0: float, T: float) -> float:
    """Natural log of lambda; finite even when lambda overflows a double."""
    return math.log(_c1(n, gamma, c0, T)) + n * c0 * (gamma + 2.0)


def _c1(n: int, gamma: float, c0: float, T: float) -> float:
    if n < 1 or gamma <= 0 or c0 < 0 or T < 0:
        raise ValueError("compute_c1_lambda needs n >= 1, gamma > 0, c0 >= 0, T >= 0")
    return (n / gamma * math.log(2.0 * math.exp(c0) + 2.0)
            + gamma * T / 3.0
            + n * (1.0 + 2.0 * n / gamma) * (c0 + 2.0 * T)
            + 3.0 * n * c0)


def compute_ks(eta: float, gamma: float, n: int) -> float:
    """Pointwise rate gamma/(6n) + (eta/2) (1 + log(eta+1) + 2n/gamma)."""
    if eta < 0 or gamma <= 0 or n < 1:
        raise ValueError("compute_ks needs eta >= 0, gamma > 0, n >= 1")
    return gamma / (6.0 * n) + eta / 2.0 * (1.0 + math.log1p(eta) + 2.0 * n / gamma)


def compute_ks_integral(eta: CoefficientFunction, gamma: float, n: int, T: float) -> float:
    """Exact integral of the pointwise rate over [0, T] (piecewise constant)."""
    if gamma <= 0 or n < 1 or T < 0:
        raise ValueError("compute_ks_integral needs gamma > 0, n >= 1, T >= 0")
    tail = eta.integral(T, transform=lambda v: v / 2.0 * (1.0 + math.log1p(v) + 2.0 * n / gamma))
    return gamma * T / (6.0 * n) + tail


def compute_h3_budget(xi_bound: float, alpha: CoefficientFunction,
                      beta: CoefficientFunction, eta: CoefficientFunction,
                      T: float) -> float:
    """||xi||_inf + integral of (alpha + beta + eta log(1+eta)) over [0, T], exact."""
    if xi_bound < 0 or T < 0:
        raise ValueError("compute_h3_budget needs xi_bound >= 0 and T >= 0")
    return (xi_bound
            + alpha.integral(T)
            + beta.integral(T)
            + eta.integral(T, transform=lambda v: v * math.log1p(v)))


def compute_bmo_bound_log(n: int, gamma: float, c0: float, T: float, lam: float) -> float:
    """Natural log of the squared-BMO bound for Z.

    log of 4 [ n e^{gamma c0} / gamma^2
               + (n e^{gamma lam} / gamma) (3 c0/2 + lam c0 (1 + gamma/2)
                 + gamma T/(12 n) + (1/2)(1 + 4n/gamma)(c0 + 2T)) ]
    evaluated by log-sum-exp so e^{gamma lam} never materializes.
    """
    if n < 1 or gamma <= 0 or c0 < 0 or T < 0 or lam < 0:
        raise ValueError("compute_bmo_bound_log: parameter out of range")
    if not math.isfinite(lam):
        return math.inf
    term1 = math.log(n / gamma ** 2) + gamma * c0
    inner = (3.0 * c0 / 2.0 + lam * c0 * (1.0 + gamma / 2.0)
             + gamma * T / (12.0 * n)
             + 0.5 * (1.0 + 4.0 * n / gamma) * (c0 + 2.0 * T))
    term2 = gamma * lam + math.log(n / gamma) + math.log(inner)
    return math.log(4.0) + float(np.logaddexp(term1, term2))


def contraction_horizon(lip_beta: float) -> float:
    """Sub-interval length 1/(2 beta) on which the frozen-y map contracts."""
    if lip_beta < 0:
        raise ValueError("contraction_horizon needs lip_beta >= 0")
    if lip_beta == 0:
        return math.inf
    return 1.0 / (2.0 * lip_beta)


# ---------------------------------------------------------------------------
# Young-type power bound and the exponential-moment certificate
# ---------------------------------------------------------------------------

def check_young_power(L: float, alpha: float, eps: float, z_norm: float) -> float:
    """Residual of L|z|^{1+a} <= ((1+a)/2) eps |z|^2 + ((1-a)/2) L^{2/(1-a)} eps^{-(1+a)/(1-a)}."""
    if L <= 0 or eps <= 0 or not (-1.0 < alpha < 1.0) or z_norm < 0:
        raise ValueError("check_young_power: parameter out of range")
    lhs = L * z_norm ** (1.0 + alpha)
    rhs = ((1.0 + alpha) / 2.0 * eps * z_norm ** 2
           + (1.0 - alpha) / 2.0 * L ** (2.0 / (1.0 - alpha))
           * eps ** (-(1.0 + alpha) / (1.0 - alpha)))
    return rhs - lhs


@dataclass(frozen=True)
class YoungScanResult:
    min_residual: float
    argmin: tuple  # (L, alpha, eps, z)
    alphas: tuple
    ls: np.ndarray = field(repr=False)
    es: np.ndarray = field(repr=False)
    zs: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)  # (n_alpha, nL, ne, nz)


def scan_young_power(alphas, l_range, e_range, z_range) -> YoungScanResult:
    """Residual scan of the power bound over log-spaced (L, eps, |z|) grids."""
    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ValueError("scan_young_power: empty alpha list")
    for a in alphas:
        if not (-1.0 < a < 1.0):
            raise ValueError(f"alpha {a} outside (-1, 1)")
    ls = _log_axis(l_range, "L")
    es = _log_axis(e_range, "eps")
    zs = _log_axis(z_range, "z")
    A = np.array(alphas)[:, None, None, None]
    L = ls[None, :, None, None]
    E = es[None, None, :, None]
    Z = zs[None, None, None, :]
    residuals = ((1 + A) / 2 * E * Z ** 2
                 + (1 - A) / 2 * L ** (2 / (1 - A)) * E ** (-(1 + A) / (1 - A))
                 - L * Z ** (1 + A))
    flat = int(np.argmin(residuals))
    ia, il, ie, iz = np.unravel_index(flat, residuals.shape)
    return YoungScanResult(
        min_residual=float(residuals[ia, il, ie, iz]),
        argmin=(float(ls[il]), alphas[ia], float(es[ie]), float(zs[iz])),
        alphas=alphas, ls=ls, es=es, zs=zs, residuals=residuals,
    )


def exp_moment_bound_log(L: float, alpha: float, bmo_norm: float, T: float) -> float:
    """Natural log of the exponential-moment bound (see exp_moment_bound)."""
    if L <= 0 or bmo_norm <= 0 or T < 0 or not (-1.0 < alpha < 1.0):
        raise ValueError("exp_moment_bound: parameter out of range")
    eps = 1.0 / ((1.0 + alpha) * bmo_norm ** 2)
    exponent = ((1.0 - alpha) / 2.0 * L ** (2.0 / (1.0 - alpha))
                * eps ** (-(1.0 + alpha) / (1.0 - alpha)) * T)
    return math.log(2.0) + exponent


def exp_moment_bound(L: float, alpha: float, bmo_norm: float, T: float) -> float:
    """Bound 2 exp(((1-a)/2) L^{2/(1-a)} eps^{-(1+a)/(1-a)} T) on the
    conditional exponential moment of L * integral of |z|^{1+a}.

    eps is pinned to 1/((1+a) bmo^2) so the quadratic share is exactly 1/2
    and the prefactor exactly 2; returns +inf past the double range (use
    exp_moment_bound_log for the always-finite form).
    """
    log_val = exp_moment_bound_log(L, alpha, bmo_norm, T)
    return math.exp(log_val) if log_val <= _LOG_OVERFLOW else math.inf


# ---------------------------------------------------------------------------
# Whole-instance certificate
# ---------------------------------------------------------------------------

def build_certificate(instance: ProblemInstance) -> Certificate:
    p = instance.params
    T = instance.grid.horizon
    c1, lam = compute_c1_lambda(instance.n, p.gamma, p.c0, T)
    lam_log = compute_lambda_log(instance.n, p.gamma, p.c0, T)
    budget = compute_h3_budget(instance.terminal.declared_bound, p.alpha, p.beta, p.eta, T)
    return Certificate(
        c1=c1,
        lambda_bound=lam,
        lambda_log=lam_log,
        lambda_log_space=not math.isfinite(lam),
        ks_integral=compute_ks_integral(p.eta, p.gamma, instance.n, T),
        h3_budget=budget,
        h3_satisfied=budget <= p.c0,
        bmo_bound_log=compute_bmo_bound_log(instance.n, p.gamma, p.c0, T, lam),
        contraction_horizon=contraction_horizon(p.lip_beta),
    )


# ---------------------------------------------------------------------------
# Sample-based falsification of the structural conditions
# ---------------------------------------------------------------------------

STRUCTURED_ASSUMPTIONS = ("H1a", "H1b", "H1c", "H1d", "H2")
TRIANGULAR_ASSUMPTIONS = ("A1", "A2")


@dataclass(frozen=True)
class Violation:
    assumption: str
    component: int  # 1-based
    t: float
    y: Optional[np.ndarray]
    z: Optional[np.ndarray]
    y2: Optional[np.ndarray]
    z2: Optional[np.ndarray]
    lhs: float
    rhs: float


@dataclass
class FalsificationReport:
    violations: list
    violation_count: int  # total found, may exceed len(violations) when truncated
    sample_count: int
    seed: int
    domain_errors: list   # (assumption, sample index, message)
    truncated: bool

    @property
    def clean(self) -> bool:
        return self.violation_count == 0


def _sample_uniforms(seed: int, count: int, per_sample: int) -> np.ndarray:
    """(count, per_sample) uniforms; sample i comes from its own counter block
    of a counter-based generator, so any index partition reproduces them."""
    out = np.empty((count, per_sample))
    for i in range(count):
        gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))
        out[i] = gen.random(per_sample)
    return out


def falsify_assumptions(instance: ProblemInstance, seed: int = 0, count: int = 10_000,
                        radius: float = 10.0, max_recorded: int = 1000) -> FalsificationReport:
    """Draw pseudo-random (t, y, z) points (and pairs) and test every
    structural inequality of the instance's generator class.

    A violation is recorded when lhs > rhs + 1e-9; domain errors at
    individual samples are recorded, not fatal.  A clean report is
    evidence, not proof.
    """
    n, d = instance.n, instance.d
    T = instance.grid.horizon
    per = 1 + 2 * n + 2 * n * d
    u = _sample_uniforms(seed, count, per)
    t = T * u[:, 0]
    yA = radius * (2.0 * u[:, 1:1 + n] - 1.0)
    yB = radius * (2.0 * u[:, 1 + n:1 + 2 * n] - 1.0)
    zA = radius * (2.0 * u[:, 1 + 2 * n:1 + 2 * n + n * d] - 1.0).reshape(count, n, d)
    zB = radius * (2.0 * u[:, 1 + 2 * n + n * d:] - 1.0).reshape(count, n, d)

    recorder = _Recorder(max_recorded)
    if instance.generator.kind == STRUCTURED:
        _falsify_structured(instance, t, yA, yB, zA, zB, recorder)
    else:
        _falsify_triangular(instance, t, yA, yB, zA, zB, recorder)

    return FalsificationReport(
        violations=recorder.violations,
        violation_count=recorder.total,
        sample_count=count,
        seed=seed,
        domain_errors=recorder.domain_errors,
        truncated=recorder.total > len(recorder.violations),
    )


class _Recorder:
    def __init__(self, max_recorded: int):
        self.violations = []
        self.total = 0
        self.domain_errors = []
        self.max_recorded = max_recorded

    def add(self, assumption, component, t, lhs, rhs, y=None, z=None, y2=None, z2=None):
        mask = np.isfinite(lhs) & np.isfinite(rhs) & (lhs > rhs + _VIOLATION_TOL)
        idx = np.nonzero(mask)[0]
        self.total += len(idx)
        for j in idx:
            if len(self.violations) >= self.max_recorded:
                return
            self.violations.append(Violation(
                assumption=assumption, component=component, t=float(t[j]),
                y=None if y is None else y[j].copy(),
                z=None if z is None else z[j].copy(),
                y2=None if y2 is None else y2[j].copy(),
                z2=None if z2 is None else z2[j].copy(),
                lhs=float(lhs[j]), rhs=float(rhs[j]),
            ))

    def eval(self, assumption, expr: Expr, env: EvalEnv, m: int) -> np.ndarray:
        """Batched evaluation with per-sample fallback on domain errors."""
        try:
            return np.broadcast_to(np.asarray(eval_expr(expr, env), dtype=float), (m,)).copy()
        except EvalError:
            pass
        vals = np.full(m, np.nan)
        for j in range(m):
            env_j = EvalEnv(
                t=float(np.atleast_1d(env.t)[j]) if np.ndim(env.t) else env.t,
                y=None if env.y is None else env.y[j],
                z=None if env.z is None else env.z[j],
                w=None if env.w is None else env.w[j],
            )
            try:
                vals[j] = eval_expr(expr, env_j)
            except EvalError as err:
                self.domain_errors.append((assumption, j, str(err)))
        return vals


def _falsify_structured(inst, t, yA, yB, zA, zB, rec: _Recorder):
    p = inst.params
    gen = inst.generator
    m, n = yA.shape
    envA = EvalEnv(t=t, y=yA, z=zA)
    envB = EvalEnv(t=t, y=yB, z=zB)
    env0 = EvalEnv(t=t, y=np.zeros_like(yA), z=np.zeros_like(zA))

    rowsA = np.sqrt((zA ** 2).sum(-1))   # (m, n) row norms
    rowsB = np.sqrt((zB ** 2).sum(-1))
    frobA = np.sqrt((zA ** 2).sum((-2, -1)))
    frobB = np.sqrt((zB ** 2).sum((-2, -1)))
    ynormA = np.sqrt((yA ** 2).sum(-1))

    alpha_t = p.alpha.value_at(t)
    beta_t = p.beta.value_at(t)
    eta_t = p.eta.value_at(t)

    for i in range(1, n + 1):
        gA = rec.eval("H1a", gen.g[i - 1], envA, m)
        rec.add("H1a", i, t, np.abs(gA), p.gamma / 2.0 * rowsA[:, i - 1] ** 2, y=yA, z=zA)

        gB = rec.eval("H1b", gen.g[i - 1], envB, m)
        rhs = p.lip_k * (1.0 + rowsA[:, i - 1] + rowsB[:, i - 1]) \
            * np.sqrt(((zA[:, i - 1] - zB[:, i - 1]) ** 2).sum(-1))
        rec.add("H1b", i, t, np.abs(gA - gB), rhs, z=zA, z2=zB)

        h0 = rec.eval("H1c", gen.h[i - 1], env0, m)
        rec.add("H1c", i, t, np.abs(h0), np.full(m, p.lip_k))

        hA = rec.eval("H1d", gen.h[i - 1], envA, m)
        hB = rec.eval("H1d", gen.h[i - 1], envB, m)
        dz = np.sqrt(((zA - zB) ** 2).sum((-2, -1)))
        dy = np.sqrt(((yA - yB) ** 2).sum(-1))
        rhs = (p.lip_k * dy
               + p.lip_k * (1.0 + frobA ** p.delta + frobB ** p.delta) * dz)
        rec.add("H1d", i, t, np.abs(hA - hB), rhs, y=yA, z=zA, y2=yB, z2=zB)

        lhs = np.sign(yA[:, i - 1]) * hA
        rhs = alpha_t + beta_t * ynormA + eta_t * np.log1p(frobA)
        rec.add("H2", i, t, lhs, rhs, y=yA, z=zA)


def _falsify_triangular(inst, t, yA, yB, zA, zB, rec: _Recorder):
    p = inst.params
    gen = inst.generator
    m, n = yA.shape
    envA = EvalEnv(t=t, y=yA, z=zA)
    rowsA = np.sqrt((zA ** 2).sum(-1))
    rowsB = np.sqrt((zB ** 2).sum(-1))

    for i in range(1, n + 1):
        kA = rec.eval("A1", gen.k[i - 1], envA, m)
        growth = (1.0
                  + np.abs(yA[:, :i]).sum(-1)
                  + (rowsA[:, :i] ** (1.0 + p.power_alpha)).sum(-1)
                  + rowsA[:, i - 1] ** 2)
        rec.add("A1", i, t, np.abs(kA), p.a1_c * growth, y=yA, z=zA)

        # vary only the i-th component of y and the i-th row of z
        yV = yA.copy()
        yV[:, i - 1] = yB[:, i - 1]
        zV = zA.copy()
        zV[:, i - 1, :] = zB[:, i - 1, :]
        kV = rec.eval("A2", gen.k[i - 1], EvalEnv(t=t, y=yV, z=zV), m)
        rhs = (p.lip_beta * np.abs(yA[:, i - 1] - yB[:, i - 1])
               + p.a2_c * (1.0 + rowsA[:, i - 1] + rowsB[:, i - 1])
               * np.sqrt(((zA[:, i - 1] - zB[:, i - 1]) ** 2).sum(-1)))
        rec.add("A2", i, t, np.abs(kA - kV), rhs, y=yA, z=zA, y2=yV, z2=zV)


def reverify_violation(instance: ProblemInstance, v: Violation, tol: float = 1e-12) -> bool:
    """Re-evaluate a reported violation from its stored sample; True when
    lhs > rhs + tol still holds."""
    lhs, rhs = evaluate_assumption(instance, v)
    return lhs > rhs + tol


def evaluate_assumption(instance: ProblemInstance, v: Violation) -> tuple:
    """Recompute (lhs, rhs) of one assumption inequality at a stored sample."""
    p = instance.params
    gen = instance.generator
    i = v.component
    t = v.t

    def ev(expr, y=None, z=None):
        return float(eval_expr(expr, EvalEnv(t=t, y=y, z=z)))

    if v.assumption == "H1a":
        row = np.sqrt((v.z[i - 1] ** 2).sum())
        return abs(ev(gen.g[i - 1], y=v.y, z=v.z)), p.gamma / 2.0 * row ** 2
    if v.assumption == "H1b":
        r1 = np.sqrt((v.z[i - 1] ** 2).sum())
        r2 = np.sqrt((v.z2[i - 1] ** 2).sum())
        dz = np.sqrt(((v.z[i - 1] - v.z2[i - 1]) ** 2).sum())
        lhs = abs(ev(gen.g[i - 1], z=v.z) - ev(gen.g[i - 1], z=v.z2))
        return lhs, p.lip_k * (1.0 + r1 + r2) * dz
    if v.assumption == "H1c":
        zeros_y = np.zeros(instance.n)
        zeros_z = np.zeros((instance.n, instance.d))
        return abs(ev(gen.h[i - 1], y=zeros_y, z=zeros_z)), p.lip_k
    if v.assumption == "H1d":
        dy = np.sqrt(((v.y - v.y2) ** 2).sum())
        dz = np.sqrt(((v.z - v.z2) ** 2).sum())
        f1 = np.sqrt((v.z ** 2).sum())
        f2 = np.sqrt((v.z2 ** 2).sum())
        lhs = abs(ev(gen.h[i - 1], y=v.y, z=v.z) - ev(gen.h[i - 1], y=v.y2, z=v.z2))
        return lhs, p.lip_k * dy + p.lip_k * (1.0 + f1 ** p.delta + f2 ** p.delta) * dz
    if v.assumption == "H2":
        frob = np.sqrt((v.z ** 2).sum())
        ynorm = np.sqrt((v.y ** 2).sum())
        lhs = np.sign(v.y[i - 1]) * ev(gen.h[i - 1], y=v.y, z=v.z)
        rhs = (p.alpha.value_at(t) + p.beta.value_at(t) * ynorm
               + p.eta.value_at(t) * np.log1p(frob))
        return float(lhs), float(rhs)
    if v.assumption == "A1":
        rows = np.sqrt((v.z ** 2).sum(-1))
        growth = (1.0 + np.abs(v.y[:i]).sum()
                  + (rows[:i] ** (1.0 + p.power_alpha)).sum()
                  + rows[i - 1] ** 2)
        return abs(ev(gen.k[i - 1], y=v.y, z=v.z)), p.a1_c * growth
    if v.assumption == "A2":
        r1 = np.sqrt((v.z[i - 1] ** 2).sum())
        r2 = np.sqrt((v.z2[i - 1] ** 2).sum())
        dz = np.sqrt(((v.z[i - 1] - v.z2[i - 1]) ** 2).sum())
        lhs = abs(ev(gen.k[i - 1], y=v.y, z=v.z) - ev(gen.k[i - 1], y=v.y2, z=v.z2))
        rhs = (p.lip_beta * abs(v.y[i - 1] - v.y2[i - 1])
               + p.a2_c * (1.0 + r1 + r2) * dz)
        return lhs, rhs
    raise ValueError(f"unknown assumption {v.assumption!r}")
