"""Small dense SDP solver for one Hermitian matrix variable ``W`` and one
nonnegative scalar ``z``.

The instances handled here have the form::

    maximize    tr(G W)          or    z
    subject to  tr(A_m W) - b_m z  (<= or >=)  c_m     m = 1..M
                tr(W) <= trace_cap,   W PSD,   z >= 0

Complex Hermitian data is mapped to the real symmetric embedding
``[[Re A, -Im A], [Im A, Re A]]`` and the resulting real problem is solved by
an infeasible-start primal-dual path-following method (HKM search direction,
Mehrotra predictor-corrector). Multipliers are reported in the Lagrangian
orientation ``-obj + sum_m lam_m * s_m * (tr(A_m W) - b_m z - c_m)
+ lam_cap * (tr W - cap) - tr(Lam W) - nu z`` with ``s_m = +1`` for ``<=``
rows and ``-1`` for ``>=`` rows, so every multiplier is nonnegative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve_triangular

from .model import complex_grid


class Objective(str, Enum):
    MAXIMIZE_TRACE = "MaximizeTrace"
    MAXIMIZE_Z = "MaximizeZ"


class Sense(str, Enum):
    LE = "<="
    GE = ">="

    @property
    def sign(self) -> float:
        return 1.0 if self is Sense.LE else -1.0


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SdpConstraint:
    """``tr(matrix @ W) - z_coeff * z  sense  rhs``."""

    matrix: np.ndarray
    z_coeff: float
    sense: Sense
    rhs: float
    label: str = ""


@dataclass(frozen=True)
class SdpInstance:
    dim: int
    objective: Objective
    constraints: tuple
    trace_cap: float
    objective_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        cons = tuple(self.constraints)
        object.__setattr__(self, "constraints", cons)
        for con in cons:
            A = np.asarray(con.matrix)
            if A.shape != (self.dim, self.dim):
                raise ValueError(f"constraint {con.label!r} has shape {A.shape}, expected {self.dim}x{self.dim}")
            if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(A), initial=0.0)):
                raise ValueError(f"constraint {con.label!r} matrix is not Hermitian")
            if not (np.isfinite(con.z_coeff) and np.isfinite(con.rhs)):
                raise ValueError(f"constraint {con.label!r} has nonfinite coefficients")
        if self.objective is Objective.MAXIMIZE_TRACE:
            G = self.objective_matrix
            if G is None or np.asarray(G).shape != (self.dim, self.dim):
                raise ValueError("MaximizeTrace needs a dim x dim objective matrix")
            G = np.asarray(G)
            if np.max(np.abs(G - G.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(G), initial=0.0)):
                raise ValueError("objective matrix is not Hermitian")
        if not np.isfinite(self.trace_cap):
            raise ValueError("trace cap must be finite")

    @property
    def is_complex(self) -> bool:
        mats = [c.matrix for c in self.constraints]
        if self.objective_matrix is not None:
            mats.append(self.objective_matrix)
        return any(np.iscomplexobj(m) and np.any(np.imag(m) != 0.0) for m in mats)

    @property
    def has_z(self) -> bool:
        return self.objective is Objective.MAXIMIZE_Z

    def objective_value(self, W, z) -> float:
        if self.objective is Objective.MAXIMIZE_TRACE:
            return float(np.real(np.trace(self.objective_matrix @ W)))
        return float(z)

    def lhs(self, W, z) -> np.ndarray:
        """``tr(A_m W) - b_m z`` for every constraint."""
        return np.array([np.real(np.trace(c.matrix @ W)) - c.z_coeff * z for c in self.constraints])

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "objective": self.objective.value,
            "objective_matrix": None if self.objective_matrix is None else complex_grid(self.objective_matrix),
            "trace_cap": self.trace_cap,
            "constraints": [
                {"label": c.label, "matrix": complex_grid(c.matrix), "z_coeff": c.z_coeff,
                 "sense": c.sense.value, "rhs": c.rhs}
                for c in self.constraints
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


@dataclass
class SdpResult:
    status: Status
    W: Optional[np.ndarray] = None
    z: float = 0.0
    objective_value: float = float("nan")
    duals: Optional[np.ndarray] = None
    cap_dual: float = float("nan")
    z_dual: float = 0.0
    dual_matrix: Optional[np.ndarray] = None
    gap: float = float("nan")
    iterations: int = 0
    certificate: Optional[np.ndarray] = None
    message: str = ""
    # orthonormal basis of the face W was solved on (None: the whole cone)
    face: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def dual_value(self, instance: SdpInstance) -> float:
        """Lagrange dual bound (an upper bound on the maximum)."""
        total = self.cap_dual * instance.trace_cap
        for lam, con in zip(self.duals, instance.constraints):
            total += lam * con.sense.sign * con.rhs
        return float(total)


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200
    stop_tol: float = 1e-11
    accept_tol: float = 1e-9
    step_fraction: float = 0.98


@dataclass(frozen=True)
class Residuals:
    primal_inf: float
    dual_inf: float
    comp_slack: float
    gap: float
    psd_comp: float

    def healthy(self, objective_value: float) -> bool:
        return (
            self.primal_inf <= 1e-8
            and self.dual_inf <= 1e-8
            and self.comp_slack <= 1e-7
            and self.gap <= 1e-6 * (1.0 + abs(objective_value))
            and self.psd_comp <= 1e-6
        )

    def to_json(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("primal_inf", "dual_inf", "comp_slack", "gap", "psd_comp")}


# -- real symmetric embedding ---------------------------------------------


def embed(M: np.ndarray) -> np.ndarray:
    """Real symmetric ``2n x 2n`` image of a Hermitian ``n x n`` matrix."""
    M = np.asarray(M)
    re, im = np.real(M), np.imag(M)
    return np.block([[re, -im], [im, re]])


def unembed(X: np.ndarray) -> np.ndarray:
    """Hermitian matrix closest to a ``2n x 2n`` real embedding."""
    n = X.shape[0] // 2
    re = 0.5 * (X[:n, :n] + X[n:, n:])
    im = 0.5 * (X[n:, :n] - X[:n, n:])
    out = re + 1j * im
    return 0.5 * (out + out.conj().T)


def real_embedding(instance: SdpInstance) -> SdpInstance:
    """Equivalent real instance of twice the dimension.

    With ``X = embed(W)`` one has ``tr(embed(A)/2 X) = tr(A W)`` and
    ``tr X = 2 tr W``, so objective values coincide.
    """
    cons = tuple(
        SdpConstraint(embed(c.matrix) / 2.0, c.z_coeff, c.sense, c.rhs, c.label)
        for c in instance.constraints
    )
    G = None if instance.objective_matrix is None else embed(instance.objective_matrix) / 2.0
    return SdpInstance(2 * instance.dim, instance.objective, cons, 2.0 * instance.trace_cap, G)


# -- solver ------------------------------------------------------------------


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(X, dX):
    """Largest t with X + t dX PSD (inf if dX keeps the cone)."""
    L = np.linalg.cholesky(X)
    Li = solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0.0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0.0
    return np.inf if not np.any(neg) else float(np.min(-x[neg] / dx[neg]))


@dataclass
class _Standard:
    """``min <C,X> + c.x  s.t. <A_i,X> + Al[i].x = b_i, X PSD, x >= 0``."""

    A: np.ndarray  # (m, n, n)
    Al: np.ndarray  # (m, l)
    C: np.ndarray
    cl: np.ndarray
    b: np.ndarray
    X0: np.ndarray
    x0: np.ndarray


def _ipm(std: _Standard, opts: SolverOptions, project=None) -> dict:
    A, Al, C, cl, b = std.A, std.Al, std.C, std.cl, std.b
    project = project or (lambda M: M)
    m, n, _ = A.shape
    nl = Al.shape[1]
    I = np.eye(n)
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.sqrt(np.linalg.norm(C) ** 2 + np.linalg.norm(cl) ** 2)

    def measure(X, x, y, S, s):
        rp = b - np.einsum("iab,ab->i", A, X) - Al @ x
        Rd = C - np.einsum("i,iab->ab", y, A) - S
        rd = cl - Al.T @ y - s
        pobj = np.sum(C * X) + cl @ x
        dobj = b @ y
        pinf = np.linalg.norm(rp) / bnorm
        dinf = np.sqrt(np.linalg.norm(Rd) ** 2 + np.linalg.norm(rd) ** 2) / cnorm
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        mu = (np.sum(X * S) + x @ s) / (n + nl)
        return (rp, Rd, rd), max(pinf, dinf, relgap), mu, dobj

    def step(state, res, mu, predictor_corrector, frac):
        """One HKM Newton step; raises LinAlgError/ValueError on breakdown."""
        X, x, y, S, s = state
        rp, Rd, rd = res
        Si = _sym(cho_solve(cho_factor(S), I))
        T = X @ A @ Si  # T_j = X A_j S^{-1}
        M = _sym(np.einsum("iab,jba->ij", A, T)) + (Al * (x / s)) @ Al.T
        try:
            Mf = cho_factor(M)
            solveM = lambda r: cho_solve(Mf, r)  # noqa: E731
        except np.linalg.LinAlgError:
            Mp = np.linalg.pinv(M)
            solveM = lambda r: Mp @ r  # noqa: E731
        XS = X @ S
        XRd = X @ Rd

        def direction(sigma_mu, corrX, corrx):
            Rc = sigma_mu * I - XS - corrX
            rc = sigma_mu - x * s - corrx
            Q = (Rc - XRd) @ Si
            rhs = rp - np.einsum("iab,ba->i", A, Q) - Al @ ((rc - x * rd) / s)
            dy = solveM(rhs)
            dS = Rd - np.einsum("i,iab->ab", dy, A)
            dX = _sym((Rc - X @ dS) @ Si)
            ds = rd - Al.T @ dy
            dx = (rc - x * ds) / s
            return dX, dx, dy, dS, ds

        def lengths(dX, dx, dS, ds, f):
            ap = min(_max_step(X, dX), _max_step_lp(x, dx))
            ad = min(_max_step(S, dS), _max_step_lp(s, ds))
            return min(1.0, f * ap), min(1.0, f * ad)

        if predictor_corrector:
            dXa, dxa, _, dSa, dsa = direction(0.0, 0.0, 0.0)
            ap, ad = lengths(dXa, dxa, dSa, dsa, 1.0)
            mu_aff = (np.sum((X + ap * dXa) * (S + ad * dSa)) + (x + ap * dxa) @ (s + ad * dsa)) / (n + nl)
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
            d = direction(sigma * mu, dXa @ dSa, dxa * dsa)
        else:
            # pure centering at the current mu
            d = direction(mu, 0.0, 0.0)
        dX, dx, dy, dS, ds = d
        if not all(np.all(np.isfinite(v)) for v in d):
            raise ValueError("nonfinite search direction")
        ap, ad = lengths(dX, dx, dS, ds, frac)
        new = (project(_sym(X + ap * dX)), x + ap * dx, y + ad * dy, project(_sym(S + ad * dS)), s + ad * ds)
        return new, max(ap, ad)

    def rank(err, state):
        # acceptable iterates compete on |XS|, which lags the trace gap: off
        # the central path |XS| is of order sqrt(mu) even when mu is tiny
        if err > opts.accept_tol:
            return (1, err)
        return (0, max(err, np.linalg.norm(state[0] @ state[3]) + np.linalg.norm(state[1] * state[4])))

    state = (std.X0.copy(), std.x0.copy(), np.zeros(m), I.copy(), np.ones(nl))
    info = {"status": "stalled", "iterations": 0}
    best = None
    since_progress = 0
    for it in range(opts.max_iter):
        res, err, mu, dobj = measure(*state)
        key = rank(err, state)
        if best is None or key[0] < best[0][0] or (key[0] == best[0][0] and key[1] < 0.5 * best[0][1]):
            since_progress = 0
        else:
            since_progress += 1
        if best is None or key < best[0]:
            best = (key, err, tuple(v.copy() for v in state))
        if best[0][0] == 0 and (best[0][1] <= opts.stop_tol or since_progress >= 3):
            info["status"] = "converged"
            break
        # primal infeasibility ray: A^T y <= 0, Al^T y <= 0, b.y > 0
        if dobj > 1e6:
            yr = state[2] / dobj
            lam = np.linalg.eigvalsh(np.einsum("i,iab->ab", yr, A))[-1]
            lp = np.max(Al.T @ yr, initial=-np.inf)
            if lam <= 1e-8 and lp <= 1e-8:
                info.update(status="infeasible", certificate=yr)
                break
        try:
            state, length = step(state, res, mu, True, opts.step_fraction)
        except (np.linalg.LinAlgError, ValueError):
            info["status"] = "breakdown"
            break
        info["iterations"] = it + 1
        if length < 1e-10:
            break
    _, err, state = best
    X, x, y, S, s = state
    info.update(X=X, x=x, y=y, S=S, s=s, err=err)
    return info


def _embedding_projector(N):
    def project(M):
        re = 0.5 * (M[:N, :N] + M[N:, N:])
        im = 0.5 * (M[N:, :N] - M[:N, N:])
        return np.block([[re, -im], [im, re]])

    return project


def _row_scale(values) -> float:
    d = max(values)
    return d if d > 0.0 else 1.0


def _z_scale(instance: SdpInstance) -> float:
    """Upper bound estimate of z used to normalize it to O(1)."""
    cap = instance.trace_cap
    bounds = []
    for con in instance.constraints:
        b = con.z_coeff
        eig = np.linalg.eigvalsh(con.matrix)
        # tr(AW) - b z >= c with b > 0, or <= c with b < 0, bounds z from above
        if con.sense is Sense.GE and b > 0:
            bounds.append((max(eig[-1], 0.0) * cap - con.rhs) / b)
        elif con.sense is Sense.LE and b < 0:
            bounds.append((con.rhs - min(eig[0], 0.0) * cap) / -b)
    bounds = [u for u in bounds if u > 0 and np.isfinite(u)]
    return min(bounds) if bounds else 1.0


def _solve_zero_cap(instance: SdpInstance, absorb: Sequence[int] = ()) -> SdpResult:
    """``tr W <= 0`` pins ``W = 0``; what remains is a 1-D problem in z."""
    n = instance.dim
    W = np.zeros((n, n), dtype=complex if instance.is_complex else float)
    lo, hi = 0.0, np.inf
    bind_hi = None
    for m, con in enumerate(instance.constraints):
        # s * (-b z - c) <= 0
        s, b, c = con.sense.sign, con.z_coeff, con.rhs
        coef, const = -s * b, -s * c
        if coef == 0.0:
            if const > 0.0:
                return SdpResult(Status.INFEASIBLE, message=f"constraint {con.label or m} fails at W = 0")
        elif coef > 0.0:
            if -const / coef < hi:
                hi, bind_hi = -const / coef, m
        else:
            lo = max(lo, -const / coef)
    if not instance.has_z:
        lo = hi = 0.0
    if lo > hi:
        return SdpResult(Status.INFEASIBLE, message="empty feasible set at W = 0")
    if instance.has_z and not np.isfinite(hi):
        return SdpResult(Status.NUMERICAL_FAILURE, message="z is unbounded")
    z = hi if instance.has_z else 0.0
    lam = np.zeros(len(instance.constraints))
    if instance.has_z and bind_hi is not None:
        lam[bind_hi] = 1.0 / abs(instance.constraints[bind_hi].z_coeff)
    Mdual = dual_matrix_M(instance, lam)
    if absorb:
        # W = 0 is forced by zero-headroom rows whose matrices sum to a
        # definite S; their common multiplier t makes t S - M PSD
        S = sum(instance.constraints[k].matrix for k in absorb)
        t = max(0.0, float(eigh(Mdual, 0.5 * (S + S.conj().T), eigvals_only=True)[-1]))
        lam[list(absorb)] += t
        Mdual = dual_matrix_M(instance, lam)
        cap_dual = 0.0
    else:
        cap_dual = max(0.0, float(np.linalg.eigvalsh(Mdual)[-1]))
    Lam = cap_dual * np.eye(n) - Mdual
    res = SdpResult(Status.OPTIMAL, W, float(z), instance.objective_value(W, z), lam, cap_dual, 0.0, Lam, 0.0)
    res.gap = abs(res.dual_value(instance) - res.objective_value)
    return res


def _is_zero_row(con: SdpConstraint) -> bool:
    return con.sense is Sense.LE and con.z_coeff == 0.0 and con.rhs == 0.0


def zero_face(instance: SdpInstance) -> Optional[np.ndarray]:
    """Orthonormal basis of the face cut out by rows ``tr(A W) <= 0`` with
    PSD ``A`` (a user with no interference headroom), or None.

    Such rows leave no strictly feasible point, so the full problem has no
    attained dual; on the face ``W = V Y V^H`` the rows vanish and the
    reduced problem is well posed.
    """
    ranges = []
    for con in instance.constraints:
        if not _is_zero_row(con):
            continue
        w, V = np.linalg.eigh(con.matrix)
        top = max(abs(w[-1]), 1e-300)
        if w[0] < -1e-12 * top:
            continue
        ranges.append(V[:, w > 1e-12 * top])
    if not ranges:
        return None
    R = np.hstack(ranges)
    U, sv, _ = np.linalg.svd(R, full_matrices=True)
    rank = int(np.sum(sv > 1e-12 * sv[0])) if sv.size else 0
    return U[:, rank:]


def _face_rows(instance: SdpInstance) -> list:
    return [k for k, con in enumerate(instance.constraints) if not _is_zero_row(con)]


def restrict(instance: SdpInstance, V: np.ndarray) -> SdpInstance:
    """The instance in face coordinates ``W = V Y V^H``; zero rows dropped."""
    def sq(A):
        B = V.conj().T @ A @ V
        return 0.5 * (B + B.conj().T)

    cons = tuple(SdpConstraint(sq(c.matrix), c.z_coeff, c.sense, c.rhs, c.label)
                 for c in (instance.constraints[k] for k in _face_rows(instance)))
    G = None if instance.objective_matrix is None else sq(instance.objective_matrix)
    return SdpInstance(V.shape[1], instance.objective, cons, instance.trace_cap, G)


def _lift(instance: SdpInstance, V: np.ndarray, red: SdpResult) -> SdpResult:
    if not red.ok:
        red.face = V
        return red
    lift = lambda Y: V @ Y @ V.conj().T  # noqa: E731
    duals = np.zeros(len(instance.constraints))
    duals[_face_rows(instance)] = red.duals
    W = lift(red.W)
    res = SdpResult(red.status, W, red.z, instance.objective_value(W, red.z), duals, red.cap_dual,
                    red.z_dual, lift(red.dual_matrix), red.gap, red.iterations, message=red.message, face=V)
    return res


def face_view(instance: SdpInstance, result: SdpResult):
    """``(instance, result)`` in the coordinates the result was solved in."""
    V = result.face
    if V is None:
        return instance, result
    Vh = V.conj().T
    red = SdpResult(result.status, Vh @ result.W @ V, result.z, result.objective_value,
                    np.asarray(result.duals)[_face_rows(instance)], result.cap_dual, result.z_dual,
                    Vh @ result.dual_matrix @ V, result.gap, result.iterations, message=result.message)
    return restrict(instance, V), red


def dual_matrix_M(instance: SdpInstance, duals: Sequence[float]) -> np.ndarray:
    """``M = G - sum_m s_m lam_m A_m`` (``G`` absent for MaximizeZ), so that
    stationarity reads ``Lam = lam_cap I - M``."""
    n = instance.dim
    M = np.zeros((n, n), dtype=complex) if instance.is_complex else np.zeros((n, n))
    if instance.objective is Objective.MAXIMIZE_TRACE:
        M = M + instance.objective_matrix
    for lam, con in zip(duals, instance.constraints):
        M = M - con.sense.sign * lam * con.matrix
    return 0.5 * (M + M.conj().T)


def solve(instance: SdpInstance, options: SolverOptions | None = None) -> SdpResult:
    opts = options or SolverOptions()
    cap = float(instance.trace_cap)
    if cap < 0.0:
        return SdpResult(Status.INFEASIBLE, message="negative trace cap")
    if cap == 0.0:
        return _solve_zero_cap(instance)
    face = zero_face(instance)
    if face is not None:
        if face.shape[1] == 0:
            zero = [k for k, con in enumerate(instance.constraints) if _is_zero_row(con)]
            return _solve_zero_cap(instance, zero)
        return _lift(instance, face, solve(restrict(instance, face), options))

    cplx = instance.is_complex
    N = instance.dim
    n = 2 * N if cplx else N
    lift = (lambda M: embed(M) / 2.0) if cplx else (lambda M: np.real(np.asarray(M)).astype(float))
    has_z = instance.has_z
    zeta = _z_scale(instance) if has_z else 1.0
    cons = instance.constraints
    M_rows = len(cons)
    m = M_rows + 1
    nl = (1 if has_z else 0) + M_rows + 1
    off = 1 if has_z else 0

    A = np.zeros((m, n, n))
    Al = np.zeros((m, nl))
    b = np.zeros(m)
    d = np.zeros(M_rows)
    for i, con in enumerate(cons):
        sgn = con.sense.sign
        d[i] = _row_scale([cap * np.linalg.norm(con.matrix, 2), abs(con.z_coeff) * zeta, abs(con.rhs)])
        A[i] = sgn * cap / d[i] * lift(con.matrix)
        if has_z:
            Al[i, 0] = -sgn * con.z_coeff * zeta / d[i]
        Al[i, off + i] = 1.0
        b[i] = sgn * con.rhs / d[i]
    A[M_rows] = lift(np.eye(N))
    Al[M_rows, off + M_rows] = 1.0
    b[M_rows] = 1.0

    C = np.zeros((n, n))
    cl = np.zeros(nl)
    if has_z:
        kappa = zeta
        cl[0] = -1.0
    else:
        G = instance.objective_matrix
        kappa = cap * np.linalg.norm(G, 2)
        kappa = kappa if kappa > 0.0 else 1.0
        C = -cap / kappa * lift(G)

    X0 = np.eye(n) / n
    x0 = np.ones(nl)
    if has_z:
        x0[0] = 1e-2
    x0[off + M_rows] = 0.5
    # iterates of an embedded problem stay in the embedding's image in exact
    # arithmetic; projecting keeps rounding from drifting along the extra
    # (real-only) directions of the optimal face
    project = _embedding_projector(N) if cplx else None
    out = _ipm(_Standard(A, Al, C, cl, b, X0, x0), opts, project)

    if out["status"] == "infeasible":
        return SdpResult(Status.INFEASIBLE, iterations=out["iterations"], certificate=out["certificate"],
                         message="primal infeasibility certified by a dual ray")
    X, x, y, S, s = out["X"], out["x"], out["y"], out["S"], out["s"]
    Wt = unembed(X) if cplx else X
    St = 2.0 * unembed(S) if cplx else S
    W = cap * Wt
    z = zeta * float(x[0]) if has_z else 0.0
    duals = kappa * np.maximum(-y[:M_rows], 0.0) / d
    cap_dual = kappa * max(-float(y[M_rows]), 0.0) / cap
    z_dual = kappa * float(s[0]) / zeta if has_z else 0.0
    Lam = kappa * St / cap
    res = SdpResult(
        Status.OPTIMAL if out["err"] <= opts.accept_tol else Status.NUMERICAL_FAILURE,
        W, max(z, 0.0), 0.0, duals, cap_dual, z_dual, Lam, 0.0, out["iterations"],
        message=out["status"],
    )
    res.objective_value = instance.objective_value(W, res.z)
    res.gap = abs(res.dual_value(instance) - res.objective_value)
    return _polish_rank_one(instance, res) if res.ok else res


def _polish_rank_one(instance: SdpInstance, res: SdpResult, steps: int = 6, act=None, use_cap=None) -> SdpResult:
    """Gauss-Newton on the KKT system restricted to ``W = u u^H``.

    Interior iterates leave the range of ``W`` misaligned with the null
    space of ``Lam`` by an angle of order sqrt(mu): ``tr(Lam W)`` reaches
    1e-11 while ``|Lam W|`` stalls near 1e-6.  On the rank-one face the
    conditions ``(lam_cap I - M(lam)) u = 0``, the active rows, the trace
    row and (for MaximizeZ) z-stationarity form a square system in
    ``(u, z, lam_active, lam_cap)`` once the phase of ``u`` is fixed; a few
    Newton steps from the interior point solve it to rounding level.  The
    result replaces the interior one only if no residual gets worse.
    """
    W = np.asarray(res.W)
    n = instance.dim
    w, U = np.linalg.eigh(W)
    if w[-1] <= 0.0 or (n > 1 and w[-2] > 1e-8 * w[-1]):
        return res
    cplx = np.iscomplexobj(W)
    cons = instance.constraints
    lam = np.asarray(res.duals, dtype=float)
    floor = 1e-10 * max(1.0, res.cap_dual, np.max(lam, initial=0.0))
    if act is None:
        act = [k for k in range(len(cons)) if lam[k] > floor]
        use_cap = res.cap_dual > floor
    G = instance.objective_matrix if instance.objective is Objective.MAXIMIZE_TRACE else np.zeros((n, n))
    has_z = instance.has_z
    u0 = U[:, -1] * np.sqrt(w[-1])
    mats = [cons[k].sense.sign * cons[k].matrix for k in act]
    stat_scale = max(res.cap_dual + np.linalg.norm(G, 2)
                     + sum(lam[k] * np.linalg.norm(cons[k].matrix, 2) for k in act), 1e-300) * np.sqrt(w[-1])
    row_scale = [_row_scale([instance.trace_cap * np.linalg.norm(cons[k].matrix, 2),
                             abs(cons[k].z_coeff) * max(abs(res.z), 1e-300), abs(cons[k].rhs)]) for k in act]

    def pack(u, z, la, c):
        parts = [np.real(u)] + ([np.imag(u)] if cplx else [])
        return np.concatenate(parts + [[z] if has_z else [], la, [c] if use_cap else []])

    def unpack(p):
        u = p[:n] + 1j * p[n:2 * n] if cplx else p[:n].copy()
        i = 2 * n if cplx else n
        z = p[i] if has_z else 0.0
        i += 1 if has_z else 0
        la = p[i:i + len(act)]
        c = p[i + len(act)] if use_cap else 0.0
        return u, z, la, c

    def system(p):
        u, z, la, c = unpack(p)
        K = c * np.eye(n) - G + sum(l * A for l, A in zip(la, mats))
        Ku = K @ u
        F = [np.real(Ku) / stat_scale] + ([np.imag(Ku) / stat_scale] if cplx else [])
        Jrows = []
        # stationarity block
        cols_u = [np.real(K), -np.imag(K)] if cplx else [np.real(K)]
        rowsR = [np.hstack(cols_u)]
        if cplx:
            rowsR.append(np.hstack([np.imag(K), np.real(K)]))
        extra = [np.asarray(A @ u) for A in mats] + ([u] if use_cap else [])
        for bi, blk in enumerate(rowsR):
            part = np.real if bi == 0 else np.imag
            J = np.hstack([blk] + ([np.zeros((n, 1))] if has_z else []) + [part(e)[:, None] for e in extra])
            Jrows.append(J / stat_scale)
        nv = p.size
        for j, k in enumerate(act):
            con = cons[k]
            Au = con.matrix @ u
            F.append([(np.real(np.vdot(u, Au)) - con.z_coeff * z - con.rhs) / row_scale[j]])
            g = [2.0 * np.real(Au)] + ([2.0 * np.imag(Au)] if cplx else [])
            row = np.concatenate(g + [[-con.z_coeff] if has_z else [], np.zeros(nv - (2 * n if cplx else n) - (1 if has_z else 0))])
            Jrows.append(row[None, :] / row_scale[j])
        if use_cap:
            F.append([(np.real(np.vdot(u, u)) - instance.trace_cap) / instance.trace_cap])
            g = [2.0 * np.real(u)] + ([2.0 * np.imag(u)] if cplx else [])
            row = np.concatenate(g + [np.zeros(nv - (2 * n if cplx else n))])
            Jrows.append(row[None, :] / instance.trace_cap)
        if has_z:
            coef = np.array([cons[k].sense.sign * cons[k].z_coeff for k in act])
            zs = 1.0 + np.sum(np.abs(coef * la)) + abs(res.z_dual)
            F.append([(1.0 + coef @ la + res.z_dual) / zs])
            row = np.zeros(nv)
            i = (2 * n if cplx else n) + 1
            row[i:i + len(act)] = coef
            Jrows.append(row[None, :] / zs)
        if cplx:
            # phase gauge: Im(u0^H u) = 0
            F.append([np.imag(np.vdot(u0, u))])
            row = np.zeros(nv)
            row[:n] = -np.imag(u0)
            row[n:2 * n] = np.real(u0)
            Jrows.append(row[None, :])
        return np.concatenate([np.ravel(f) for f in F]), np.vstack(Jrows)

    p = pack(u0, res.z, lam[act], res.cap_dual)
    F, J = system(p)
    for _ in range(steps):
        if not np.all(np.isfinite(J)):
            return res
        p = p - np.linalg.lstsq(J, F, rcond=None)[0]
        F_new, J = system(p)
        if np.linalg.norm(F_new) < 1e-15 or np.linalg.norm(F_new) > 0.5 * np.linalg.norm(F):
            F = F_new
            break
        F = F_new
    if not np.all(np.isfinite(p)):
        return res
    u, z, la, c = unpack(p)
    new_lam = np.zeros_like(lam)
    new_lam[act] = la
    if np.any(new_lam < 0.0) or c < 0.0:
        # a weakly active row went the wrong way: retry without it
        keep = [k for k in act if new_lam[k] >= 0.0]
        if len(keep) == len(act) and not use_cap:
            return res
        return _polish_rank_one(instance, res, steps, keep, use_cap and c >= 0.0)
    Wn = np.outer(u, np.conj(u)) if cplx else np.outer(u, u)
    Lam = c * np.eye(n) - dual_matrix_M(instance, new_lam)
    cand = SdpResult(res.status, Wn, max(float(z), 0.0), 0.0, new_lam, float(c), res.z_dual,
                     0.5 * (Lam + Lam.conj().T), 0.0, res.iterations, message=res.message)
    cand.objective_value = instance.objective_value(Wn, cand.z)
    cand.gap = abs(cand.dual_value(instance) - cand.objective_value)
    old, new = residuals(instance, res), residuals(instance, cand)
    if new.psd_comp >= old.psd_comp:
        return res
    # rounding-level changes in the other residuals are not a reason to refuse
    for k in ("primal_inf", "dual_inf", "comp_slack"):
        if getattr(new, k) > max(2.0 * getattr(old, k), 1e-12):
            return res
    if new.gap > max(2.0 * old.gap, 1e-10 * (1.0 + abs(cand.objective_value))):
        return res
    return cand


# -- diagnostics ---------------------------------------------------------------


def residuals(instance: SdpInstance, result: SdpResult) -> Residuals:
    """KKT residuals of a solution, each made dimensionless.

    Row violations are measured against the row magnitude
    ``max(cap |A_m|, |b_m| z_ref, |c_m|)``; stationarity against the size of
    the terms it balances; complementarity against ``1 + |objective|``.
    ``psd_comp`` is ``|Lam W|_F / |W|_F``.  A result solved on a face is
    checked for dual optimality on that face and for primal feasibility in
    full.
    """
    if result.face is not None:
        red = residuals(*face_view(instance, result))
        full = residuals(instance, SdpResult(result.status, result.W, result.z, duals=np.zeros(len(instance.constraints)),
                                             cap_dual=0.0, dual_matrix=np.zeros_like(result.W)))
        return Residuals(max(red.primal_inf, full.primal_inf), red.dual_inf, red.comp_slack, red.gap, red.psd_comp)
    W, z = np.asarray(result.W), float(result.z)
    cap = instance.trace_cap
    lam = np.asarray(result.duals, dtype=float)
    zref = _z_scale(instance) if instance.has_z else 0.0
    obj = instance.objective_value(W, z)
    lhs = instance.lhs(W, z)

    primal = [max(0.0, np.real(np.trace(W)) - cap) / max(cap, 1e-300)]
    comp = []
    for k, con in enumerate(instance.constraints):
        viol = con.sense.sign * (lhs[k] - con.rhs)
        scale = _row_scale([cap * np.linalg.norm(con.matrix, 2), abs(con.z_coeff) * max(zref, z), abs(con.rhs)])
        primal.append(max(0.0, viol) / scale)
        comp.append(abs(lam[k] * viol))
    w_eigs = np.linalg.eigvalsh(W)
    primal.append(max(0.0, -w_eigs[0]) / max(cap, 1e-300))
    if instance.has_z:
        primal.append(max(0.0, -z) / max(zref, 1e-300))

    n = instance.dim
    Lam = np.asarray(result.dual_matrix)
    Mdual = dual_matrix_M(instance, lam)
    stat = result.cap_dual * np.eye(n) - Mdual - Lam
    # size of the individual terms that stationarity balances
    stat_scale = result.cap_dual + np.linalg.norm(Lam, 2) + sum(
        abs(lk) * np.linalg.norm(con.matrix, 2) for lk, con in zip(lam, instance.constraints))
    if instance.objective is Objective.MAXIMIZE_TRACE:
        stat_scale += np.linalg.norm(instance.objective_matrix, 2)
    dual = [np.linalg.norm(stat) / max(stat_scale, 1e-300)]
    lam_eigs = np.linalg.eigvalsh(Lam)
    dual.append(max(0.0, -lam_eigs[0]) / max(stat_scale, 1e-300))
    dual.append(max(0.0, -np.min(lam, initial=0.0)) / max(stat_scale, 1e-300))
    if instance.has_z:
        # d/dz: -1 - sum_m s_m lam_m b_m - nu = 0
        terms = [con.sense.sign * lk * con.z_coeff for lk, con in zip(lam, instance.constraints)]
        rz = -1.0 - sum(terms) - result.z_dual
        dual.append(abs(rz) / (1.0 + sum(abs(t) for t in terms) + abs(result.z_dual)))
        comp.append(abs(result.z_dual * z))
    comp.append(abs(result.cap_dual * (np.real(np.trace(W)) - cap)))
    comp.append(abs(np.real(np.trace(Lam @ W))))
    dual_obj = result.dual_value(instance)
    wn = np.linalg.norm(W)
    return Residuals(
        primal_inf=float(max(primal)),
        dual_inf=float(max(dual)),
        comp_slack=float(max(comp) / (1.0 + abs(obj))),
        gap=float(abs(dual_obj - obj)),
        psd_comp=float(np.linalg.norm(Lam @ W) / wn) if wn > 0 else 0.0,
    )
