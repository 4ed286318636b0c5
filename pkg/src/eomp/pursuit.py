"""Greedy pursuit solvers: OMP, eOMP and a least-squares OMP oracle.

All three share the same selection rule (largest absolute correlation,
ties to the lowest atom index) and the same stopping rule. They differ in
what the residual is correlated against:

* :func:`omp_incremental` correlates with the original atoms and then
  orthonormalizes only the chosen atom against the chosen set.
* :func:`eomp` keeps a working copy of every remaining atom that is
  re-orthonormalized against each newly chosen atom, and correlates with
  those working atoms. The chosen atom is therefore the one giving the
  largest residual reduction.
* :func:`omp_ls_oracle` is textbook OMP with a full least-squares solve per
  iteration; it exists to cross-check :func:`omp_incremental`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg.blas import dger

from .dictionaries import Dictionary
from .linalg import SingularMatrixError, as_vec, least_squares

__all__ = [
    "StopRule",
    "PursuitState",
    "PursuitResult",
    "DegenerateAtom",
    "gram_schmidt_step",
    "select_max_correlation",
    "omp_incremental",
    "eomp",
    "omp_ls_oracle",
    "refit",
    "lemma1_check",
    "lemma1_violations",
    "SOLVERS",
]

DEGENERATE_TOL = 1e-10
UNIT_TOL = 1e-8
REORTH_RATIO = 0.7
AUDIT_EVERY = 32
AUDIT_TOL = 1e-6
DRIFT_TOL = 1e-8  # estimated drift that triggers a per-atom re-projection

EPSILON_REACHED = "epsilon-reached"
MAX_ITER = "max-iter"
STALLED = "stalled"
EXHAUSTED = "exhausted-atoms"


class DegenerateAtom(Exception):
    """Raised internally when an atom lies in the span of the chosen set."""


@dataclass(frozen=True)
class StopRule:
    """When to stop a pursuit.

    epsilon:   stop once ``||r||_2 < epsilon`` (absolute).
    max_iter:  iteration cap; ``None`` means ``min(N, M)``.
    stall_tol: stop when an iteration reduces ``||r||_2`` by less than
               ``stall_tol * ||y||_2``. The stalling atom is not kept.
    """

    epsilon: float = 0.0
    max_iter: Optional[int] = None
    stall_tol: float = 1e-12

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.stall_tol < 0:
            raise ValueError(f"stall_tol must be >= 0, got {self.stall_tol}")


@dataclass
class PursuitState:
    """Snapshot handed to ``callback`` before each selection.

    ``atoms`` holds the candidate atoms column by column, aligned with
    ``remaining`` (original indices). For eOMP these are the working,
    orthonormalized atoms; for OMP they are the original atoms. Arrays are
    views into solver memory and are only valid during the callback.
    """

    t: int
    residual: np.ndarray
    support: list
    remaining: np.ndarray
    atoms: np.ndarray
    D: np.ndarray
    z: np.ndarray
    excluded: set


@dataclass
class PursuitResult:
    support: list
    D: np.ndarray
    z: np.ndarray
    residual: np.ndarray
    residual_norms: np.ndarray
    termination: str
    x: Optional[np.ndarray] = None
    excluded: set = field(default_factory=set)

    @property
    def iterations(self) -> int:
        return len(self.support)

    @property
    def final_residual(self) -> float:
        return float(self.residual_norms[-1])

    def approximation(self) -> np.ndarray:
        """``D @ z``, the reconstruction from the orthonormalized atoms."""
        return self.D @ self.z

    def dense_x(self, m: int) -> np.ndarray:
        if self.x is None:
            raise ValueError("result carries no coefficients w.r.t. the dictionary; use refit")
        out = np.zeros(m)
        out[self.support] = self.x
        return out


def gram_schmidt_step(psi, d) -> np.ndarray:
    """Remove the component of ``psi`` along unit vector ``d`` and renormalize.

    Raises DegenerateAtom when the projected norm is below 1e-10, i.e. when
    ``psi`` is (numerically) parallel to ``d``.
    """
    psi, d = as_vec(psi), as_vec(d)
    if psi.shape != d.shape:
        raise ValueError(f"length mismatch: {psi.shape[0]} vs {d.shape[0]}")
    dn = np.sqrt(d @ d)
    if abs(dn - 1.0) > UNIT_TOL:
        raise ValueError(f"d must have unit norm, has norm {dn!r}")
    v = psi - (d @ psi) * d
    nv = np.sqrt(v @ v)
    if nv < DEGENERATE_TOL:
        raise DegenerateAtom
    return v / nv


def select_max_correlation(atoms, r, candidates=None):
    """Return ``(index, correlation)`` maximizing ``|<atom, r>|``.

    ``candidates`` lists the original column indices to consider (all
    columns when omitted); the returned index is one of them. Ties go to the
    lowest index. Raises ValueError on an empty candidate set.
    """
    atoms = np.asarray(atoms)
    if candidates is None:
        candidates = np.arange(atoms.shape[1])
        cols = atoms
    else:
        candidates = np.asarray(candidates, dtype=np.intp)
        cols = atoms[:, candidates]
    if candidates.size == 0:
        raise ValueError("no candidate atoms left")
    corr = cols.T @ r
    return _argmax_abs(corr, candidates)


def _argmax_abs(corr, labels):
    a = np.abs(corr)
    best = a.max()
    hits = np.flatnonzero(a == best)
    pos = hits[np.argmin(labels[hits])] if hits.size > 1 else hits[0]
    return int(labels[pos]), float(corr[pos])


def _orthonormalize_against(phi, D):
    """Classical Gram-Schmidt of ``phi`` against the columns of ``D``.

    A second pass runs when the first one cancels more than 30% of the norm.
    """
    v = phi.copy()
    n0 = np.sqrt(v @ v)
    if D.shape[1]:
        v -= D @ (D.T @ v)
        n1 = np.sqrt(v @ v)
        if n1 < REORTH_RATIO * n0:
            v -= D @ (D.T @ v)
    nv = np.sqrt(v @ v)
    if nv < DEGENERATE_TOL * max(n0, 1.0) or n0 == 0.0:
        raise DegenerateAtom
    return v / nv


class _Run:
    """Bookkeeping shared by the incremental solvers."""

    def __init__(self, dictionary: Dictionary, y, stop: Optional[StopRule]):
        self.dictionary = dictionary
        self.y = as_vec(y)
        if self.y.shape[0] != dictionary.n:
            raise ValueError(f"y has length {self.y.shape[0]}, dictionary has N={dictionary.n}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y contains non-finite values")
        self.stop = stop or StopRule()
        n, m = dictionary.atoms.shape
        self.max_iter = self.stop.max_iter or min(n, m)
        self.y_norm = float(np.sqrt(self.y @ self.y))
        self.r = self.y.copy()
        self.norms = [self.y_norm]
        self.D = np.zeros((n, min(self.max_iter, n)), order="F")
        self.z = np.zeros(self.D.shape[1])
        self.support = []
        self.excluded = {int(j) for j in np.flatnonzero(dictionary.degenerate)}
        self.termination = None

    @property
    def t(self):
        return len(self.support)

    def should_stop(self) -> bool:
        if self.norms[-1] < self.stop.epsilon or self.y_norm == 0.0:
            self.termination = EPSILON_REACHED
        elif self.t >= self.max_iter:
            self.termination = MAX_ITER
        elif self.t >= self.D.shape[1]:
            # N orthonormal atoms already span the space
            self.termination = EXHAUSTED
        return self.termination is not None

    def accept(self, k, psi) -> bool:
        zt = float(self.r @ psi)
        r_new = self.r - zt * psi
        new_norm = float(np.sqrt(r_new @ r_new))
        drop = self.norms[-1] - new_norm
        if drop <= 0.0 or drop < self.stop.stall_tol * self.y_norm:
            self.termination = STALLED
            return False
        t = self.t
        self.D[:, t] = psi
        self.z[t] = zt
        self.support.append(int(k))
        self.r = r_new
        self.norms.append(new_norm)
        return True

    def state(self, remaining, atoms):
        t = self.t
        return PursuitState(
            t, self.r, self.support, remaining, atoms, self.D[:, :t], self.z[:t], self.excluded
        )

    def result(self, want_x=False) -> PursuitResult:
        t = self.t
        res = PursuitResult(
            support=list(self.support),
            D=np.asfortranarray(self.D[:, :t].copy()),
            z=self.z[:t].copy(),
            residual=self.r,
            residual_norms=np.array(self.norms),
            termination=self.termination,
            excluded=set(self.excluded),
        )
        if want_x:
            res.x = refit(self.dictionary, res.support, self.y) if t else np.zeros(0)
        return res


def omp_incremental(
    dictionary: Dictionary,
    y,
    stop: Optional[StopRule] = None,
    *,
    refit: bool = False,
    callback: Optional[Callable[[PursuitState], None]] = None,
) -> PursuitResult:
    """OMP with incremental orthonormalization of the chosen atoms.

    Each iteration picks the original atom most correlated with the
    residual, orthonormalizes it against the atoms chosen so far, and
    projects the residual onto it. Set ``refit=True`` to also solve for the
    coefficients ``x`` with respect to the original atoms.
    """
    run = _Run(dictionary, y, stop)
    atoms = dictionary.atoms
    available = ~dictionary.degenerate.copy()
    while not run.should_stop():
        remaining = np.flatnonzero(available)
        if callback is not None:
            callback(run.state(remaining, atoms[:, remaining]))
        corr = atoms.T @ run.r
        while True:
            if not available.any():
                run.termination = EXHAUSTED
                break
            k, _ = _argmax_abs(corr[available], np.flatnonzero(available))
            try:
                psi = _orthonormalize_against(atoms[:, k], run.D[:, : run.t])
            except DegenerateAtom:
                available[k] = False
                run.excluded.add(k)
                continue
            break
        if run.termination is not None or not run.accept(k, psi):
            break
        available[k] = False
    return run.result(refit)


def eomp(
    dictionary: Dictionary,
    y,
    stop: Optional[StopRule] = None,
    *,
    refit: bool = False,
    callback: Optional[Callable[[PursuitState], None]] = None,
    audit_every: int = AUDIT_EVERY,
) -> PursuitResult:
    """OMP with recursive orthonormalization of the remaining atoms.

    From the second iteration on, every remaining atom in a private working
    copy of the dictionary is made orthogonal to the atom chosen last and
    renormalized. Selection then uses correlations with these working
    atoms, so the chosen atom maximizes the residual reduction. Atoms that
    collapse into the span of the chosen set are excluded.

    Every ``audit_every`` iterations the working atoms are checked against
    all chosen atoms and re-projected if orthogonality has drifted past
    1e-6. In between, a running bound on each atom's drift (rounding error
    grows by 1/norm at every renormalization) triggers an early re-projection
    of just that atom once it passes ``DRIFT_TOL``.
    """
    run = _Run(dictionary, y, stop)
    rem = np.flatnonzero(~dictionary.degenerate)
    # compact working set: live columns are W[:, :R], labelled by rem[:R]
    W = np.array(dictionary.atoms[:, rem], dtype=np.float64, order="F")
    R = rem.size
    if dictionary.normalization != "unit-l2":
        W /= np.linalg.norm(W, axis=0)
    drift = np.zeros(R)
    step_err = dictionary.n * np.finfo(np.float64).eps

    def drop(positions):
        nonlocal R
        for pos in sorted(positions, reverse=True):
            R -= 1
            if pos != R:
                W[:, pos] = W[:, R]
                rem[pos] = rem[R]
                drift[pos] = drift[R]

    def renormalize(cols):
        norms = np.sqrt(np.einsum("ij,ij->j", cols, cols))
        dead = np.flatnonzero(norms < DEGENERATE_TOL)
        norms[dead] = 1.0
        cols /= norms
        return dead, norms

    while not run.should_stop():
        t = run.t
        if t > 0 and R > 0:
            d = run.D[:, t - 1]
            live = W[:, :R]
            proj = d @ live
            dger(-1.0, d, proj, a=live, overwrite_a=True)
            dead, norms = renormalize(live)
            drift[:R] = (drift[:R] + step_err) / norms
            Dt = run.D[:, :t]
            if audit_every and t % audit_every == 0:
                g = Dt.T @ live
                if np.abs(g).max() > AUDIT_TOL:
                    live -= Dt @ g
                    dead = np.union1d(dead, renormalize(live)[0])
                    drift[:R] = step_err
            hot = np.flatnonzero(drift[:R] > DRIFT_TOL)
            if hot.size:
                cols = live[:, hot]
                cols -= Dt @ (Dt.T @ cols)
                lost, _ = renormalize(cols)
                live[:, hot] = cols
                drift[hot] = step_err
                dead = np.union1d(dead, hot[lost])
            if dead.size:
                run.excluded.update(int(j) for j in rem[dead])
                drop(dead)
        if R == 0:
            run.termination = EXHAUSTED
            break
        live = W[:, :R]
        if callback is not None:
            callback(run.state(rem[:R], live))
        corr = live.T @ run.r
        k, _ = _argmax_abs(corr, rem[:R])
        pos = int(np.flatnonzero(rem[:R] == k)[0])
        psi = live[:, pos].copy()
        if t > 0:
            # one cleanup pass keeps D orthonormal to working precision
            Dt = run.D[:, :t]
            psi -= Dt @ (Dt.T @ psi)
            psi /= np.sqrt(psi @ psi)
        if not run.accept(k, psi):
            break
        drop([pos])
    return run.result(refit)


def omp_ls_oracle(
    dictionary: Dictionary,
    y,
    stop: Optional[StopRule] = None,
    *,
    refit: bool = True,
    callback: Optional[Callable[[PursuitState], None]] = None,
) -> PursuitResult:
    """Textbook OMP: select by correlation, then least squares on the support.

    The returned ``D`` and ``z`` come from a QR factorization of the chosen
    atoms (positive diagonal in R), so they are comparable with the other
    solvers. ``x`` is always filled in; ``refit`` is accepted for a uniform
    signature.
    """
    y = as_vec(y)
    run = _Run(dictionary, y, stop)
    atoms = dictionary.atoms
    available = ~dictionary.degenerate.copy()
    x = np.zeros(0)
    while not run.should_stop():
        remaining = np.flatnonzero(available)
        if callback is not None:
            callback(run.state(remaining, atoms[:, remaining]))
        corr = atoms.T @ run.r
        accepted = False
        while available.any():
            k, _ = _argmax_abs(corr[available], np.flatnonzero(available))
            cand = run.support + [k]
            try:
                x_new = least_squares(atoms[:, cand], y)
            except SingularMatrixError:
                available[k] = False
                run.excluded.add(k)
                continue
            r_new = y - atoms[:, cand] @ x_new
            new_norm = float(np.sqrt(r_new @ r_new))
            drop_ = run.norms[-1] - new_norm
            if drop_ <= 0.0 or drop_ < run.stop.stall_tol * run.y_norm:
                run.termination = STALLED
                break
            run.support.append(int(k))
            run.r = r_new
            run.norms.append(new_norm)
            available[k] = False
            x = x_new
            accepted = True
            break
        if not accepted:
            run.termination = run.termination or EXHAUSTED
            break
    t = run.t
    if t:
        q, rr = np.linalg.qr(atoms[:, run.support])
        signs = np.where(np.diag(rr) < 0, -1.0, 1.0)
        q = q * signs
        run.D[:, :t] = q
        run.z[:t] = q.T @ y
    res = run.result(False)
    res.x = x
    return res


def refit(dictionary: Dictionary, support: Sequence[int], y) -> np.ndarray:
    """Least-squares coefficients of ``y`` on the atoms listed in ``support``."""
    support = list(support)
    if not support:
        raise ValueError("support is empty")
    return least_squares(dictionary.atoms[:, support], y)


SOLVERS = {"omp": omp_incremental, "eomp": eomp, "omp-ls": omp_ls_oracle}


def lemma1_violations(dictionary: Dictionary, y, iterations: int, algo="eomp", tol=1e-9):
    """Iterations at which a solver did not pick the best residual reduction.

    The solver is run for ``iterations`` steps. Each step is then replayed
    independently: every other remaining atom is orthonormalized against the
    chosen set from scratch and the reduction ``||r_prev - r_next||`` it
    would have produced is compared with the one actually achieved. A step
    violates when some alternative beats it by more than ``tol * ||y||``.
    """
    solver = SOLVERS[algo] if isinstance(algo, str) else algo
    y = as_vec(y)
    res = solver(dictionary, y, StopRule(epsilon=0.0, max_iter=iterations))
    atoms = dictionary.atoms
    y_norm = float(np.sqrt(y @ y))
    bad = []
    for t, k in enumerate(res.support):
        Dt = res.D[:, :t]
        r_prev = y - Dt @ (Dt.T @ y)
        chosen = np.linalg.norm(res.z[t] * res.D[:, t])
        others = np.ones(dictionary.m, dtype=bool)
        others[res.support[:t]] = False
        others[dictionary.degenerate] = False
        P = atoms[:, others]
        P = P - Dt @ (Dt.T @ P)
        P = P - Dt @ (Dt.T @ P)
        norms = np.linalg.norm(P, axis=0)
        P = P[:, norms >= DEGENERATE_TOL] / norms[norms >= DEGENERATE_TOL]
        if P.shape[1] == 0:
            continue
        # ||r_prev - (r_prev - <r_prev, psi> psi)|| for every alternative psi
        alt = np.linalg.norm(P * (P.T @ r_prev), axis=0)
        if alt.max() > chosen + tol * y_norm:
            bad.append(t)
    return bad


def lemma1_check(dictionary: Dictionary, y, iterations: int, algo="eomp") -> bool:
    """True when every step of the solver achieved the maximal residual reduction."""
    return not lemma1_violations(dictionary, y, iterations, algo)
