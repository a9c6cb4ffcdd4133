"""Low-energy spectrum of H(s) = A(s)*H_D + B(s)*H_P on the full 2^n space.

H_P is diagonal in the sigma^z product basis (energies precomputed once per
instance), H_D = -sum_mu sigma^x_mu flips single bits, so the Hamiltonian is
applied without ever materialising a matrix.  Basis convention: bit mu of the
index is 0 for s_mu = +1 and 1 for s_mu = -1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .model import Instance, Schedule, _energies_for_indices, _spins_from_indices, schedule_at

APPLY_MAX_QUBITS = 24
PROFILE_MAX_QUBITS = 20
DEGENERACY_THRESHOLD_GHZ = 1e-10


class EigensolverError(RuntimeError):
    """Krylov iteration failed to reach the residual target."""


def diagonal_energies(instance: Instance) -> np.ndarray:
    """Dimensionless Ising energy of every basis state (length 2^n)."""
    n = instance.num_qubits
    out = np.empty(1 << n)
    chunk = 1 << 18
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        out[start : start + len(idx)] = _energies_for_indices(instance, idx)
    return out


def spin_columns(num_qubits: int) -> np.ndarray:
    """(2^n, n) matrix of sigma^z eigenvalues per basis state and qubit."""
    idx = np.arange(1 << num_qubits, dtype=np.int64)
    return _spins_from_indices(idx, num_qubits)


def _driver_apply(v: np.ndarray, num_qubits: int) -> np.ndarray:
    """H_D v with H_D = -sum_mu sigma^x_mu (single-bit flips, amplitude -1)."""
    out = np.zeros_like(v)
    for mu in range(num_qubits):
        v3 = v.reshape(-1, 2, 1 << mu)
        out.reshape(-1, 2, 1 << mu)[:, 0, :] -= v3[:, 1, :]
        out.reshape(-1, 2, 1 << mu)[:, 1, :] -= v3[:, 0, :]
    return out


class HamiltonianAction:
    """Reusable matrix-free action of A*H_D + B*H_P for one instance."""

    def __init__(self, instance: Instance):
        if instance.num_qubits > APPLY_MAX_QUBITS:
            raise ValueError(
                f"{instance.num_qubits} qubits exceeds the {APPLY_MAX_QUBITS}-qubit memory guard"
            )
        self.instance = instance
        self.num_qubits = instance.num_qubits
        self.dim = 1 << instance.num_qubits
        self.diag = diagonal_energies(instance)
        h = instance.field_array()
        _, _, vals = instance.edge_arrays()
        self._p_norm_bound = float(np.abs(h).sum() + np.abs(vals).sum())

    def apply(self, a_ghz: float, b_ghz: float, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise ValueError(f"state vector shape {v.shape} != ({self.dim},)")
        out = b_ghz * (self.diag * v)
        if a_ghz != 0.0:
            out += a_ghz * _driver_apply(v, self.num_qubits)
        return out

    def norm_bound(self, a_ghz: float, b_ghz: float) -> float:
        return abs(a_ghz) * self.num_qubits + abs(b_ghz) * self._p_norm_bound

    def operator(self, a_ghz: float, b_ghz: float) -> LinearOperator:
        return LinearOperator(
            (self.dim, self.dim),
            matvec=lambda v: self.apply(a_ghz, b_ghz, np.ascontiguousarray(v.ravel())),
            dtype=float,
        )


def apply_hamiltonian(instance: Instance, a_ghz: float, b_ghz: float, v: np.ndarray) -> np.ndarray:
    """(A*H_D + B*H_P) v without materialising the matrix."""
    return HamiltonianAction(instance).apply(a_ghz, b_ghz, v)


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def _dense_eigenpairs(action: HamiltonianAction, a: float, b: float, k: int):
    ham = np.diag(b * action.diag)
    idx = np.arange(action.dim)
    for mu in range(action.num_qubits):
        ham[idx, idx ^ (1 << mu)] = -a
    evals, evecs = np.linalg.eigh(ham)
    return [(float(evals[i]), _fix_phase(evecs[:, i].copy())) for i in range(k)]


def _diagonal_eigenpairs(action: HamiltonianAction, b: float, k: int):
    order = np.argsort(action.diag, kind="stable")[:k]
    pairs = []
    for i in order:
        vec = np.zeros(action.dim)
        vec[i] = 1.0
        pairs.append((float(b * action.diag[i]), vec))
    return pairs


def lowest_eigenpairs(
    instance_or_action: Instance | HamiltonianAction,
    s: float,
    schedule: Schedule,
    k: int = 2,
    v0: np.ndarray | None = None,
) -> list[tuple[float, np.ndarray]]:
    """k lowest eigenpairs of H(s), energies in GHz, ascending.

    Residuals are verified against 1e-8 * ||H|| and eigenvector phases fixed
    by making the largest-magnitude amplitude positive.
    """
    if k < 1 or k > 6:
        raise ValueError("k must be in 1..6")
    action = (
        instance_or_action
        if isinstance(instance_or_action, HamiltonianAction)
        else HamiltonianAction(instance_or_action)
    )
    a, b = schedule_at(schedule, s)

    if action.dim <= 64:
        pairs = _dense_eigenpairs(action, a, b, k)
    elif a == 0.0 or abs(a) < 1e-14 * max(abs(b), 1.0):
        pairs = _diagonal_eigenpairs(action, b, k)
    else:
        ncv = min(action.dim, max(24, 4 * k + 4))
        try:
            evals, evecs = eigsh(
                action.operator(a, b),
                k=k,
                which="SA",
                v0=v0,
                ncv=ncv,
                tol=1e-11,
                maxiter=8000,
            )
        except ArpackNoConvergence as exc:
            raise EigensolverError(
                f"eigensolver failed at s={s}: converged {len(exc.eigenvalues)}/{k}"
            ) from exc
        order = np.argsort(evals)
        pairs = [(float(evals[i]), _fix_phase(evecs[:, i].copy())) for i in order]

    bound = max(action.norm_bound(a, b), 1e-12)
    for e, vec in pairs:
        res = np.linalg.norm(action.apply(a, b, vec) - e * vec)
        if res > 1e-8 * bound:
            raise EigensolverError(f"residual {res:.3e} exceeds 1e-8*||H||={1e-8 * bound:.3e} at s={s}")
    for i in range(len(pairs)):
        for jj in range(i + 1, len(pairs)):
            if abs(np.dot(pairs[i][1], pairs[jj][1])) > 1e-8:
                raise EigensolverError(f"eigenvectors {i},{jj} not orthogonal at s={s}")
    return pairs


def transition_moments(
    psi0: np.ndarray, psi1: np.ndarray, zcols: np.ndarray
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Summed squared sigma^z transition elements, eigenstate Hamming distance,
    and per-qubit polarisations of both states.

    Both quantities are built from squared magnitudes, hence invariant under
    eigenvector sign/phase changes.
    """
    cross = (psi0 * psi1) @ zcols
    pol0 = (psi0 * psi0) @ zcols
    pol1 = (psi1 * psi1) @ zcols
    a_elem = float(np.dot(cross, cross))
    hamming = float(np.sum((pol0 - pol1) ** 2) / 4.0)
    return a_elem, hamming, pol0, pol1


@dataclass
class GapProfile:
    """Per-s record of the two-level structure along the anneal."""

    s: np.ndarray
    e0_ghz: np.ndarray
    e1_ghz: np.ndarray
    omega10_ghz: np.ndarray
    a_elem: np.ndarray
    hamming: np.ndarray
    pol0: np.ndarray  # (n_s, n_qubits)
    pol1: np.ndarray
    degenerate: np.ndarray  # bool, omega10 below resolution

    @property
    def num_qubits(self) -> int:
        return self.pol0.shape[1]

    def to_csv(self) -> str:
        lines = ["s,E0,E1,omega10,a_elem,hamming"]
        for i in range(len(self.s)):
            lines.append(
                f"{self.s[i]:.10g},{self.e0_ghz[i]:.12g},{self.e1_ghz[i]:.12g},"
                f"{self.omega10_ghz[i]:.12g},{self.a_elem[i]:.12g},{self.hamming[i]:.12g}"
            )
        return "\n".join(lines) + "\n"

    def polarizations_to_csv(self) -> str:
        n = self.num_qubits
        cols = [f"q{q}_state0" for q in range(n)] + [f"q{q}_state1" for q in range(n)]
        lines = ["s," + ",".join(cols)]
        for i in range(len(self.s)):
            vals = list(self.pol0[i]) + list(self.pol1[i])
            lines.append(f"{self.s[i]:.10g}," + ",".join(f"{v:.10g}" for v in vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "GapProfile":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        cols = np.array([[float(v) for v in row] for row in rows])
        nan = np.full((len(rows), 1), np.nan)
        return cls(
            s=cols[:, 0],
            e0_ghz=cols[:, 1],
            e1_ghz=cols[:, 2],
            omega10_ghz=cols[:, 3],
            a_elem=cols[:, 4],
            hamming=cols[:, 5],
            pol0=nan,
            pol1=nan,
            degenerate=cols[:, 3] < DEGENERACY_THRESHOLD_GHZ,
        )


def default_s_grid(num_points: int = 201) -> np.ndarray:
    return np.linspace(0.0, 1.0, num_points)


def _profile_rows(action, schedule, s_values, warm):
    rows = []
    v0 = warm
    zcols = spin_columns(action.num_qubits)
    for s in s_values:
        pairs = lowest_eigenpairs(action, float(s), schedule, k=2, v0=v0)
        (e0, psi0), (e1, psi1) = pairs[0], pairs[1]
        v0 = psi0
        a_elem, hamming, pol0, pol1 = transition_moments(psi0, psi1, zcols)
        rows.append((float(s), e0, e1, e1 - e0, a_elem, hamming, pol0, pol1))
    return rows


def compute_profile(
    instance: Instance,
    schedule: Schedule,
    s_grid: np.ndarray | None = None,
    refine_min_gap: bool = True,
) -> GapProfile:
    """Gap, transition moments and polarisations over an s-grid.

    The coarse grid is densified tenfold where omega10 <= 10 * min(omega10)
    so the narrow avoided-crossing feature is resolved.
    """
    if instance.num_qubits > PROFILE_MAX_QUBITS:
        raise ValueError(f"profiles limited to {PROFILE_MAX_QUBITS} qubits")
    action = HamiltonianAction(instance)
    grid = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    rows = _profile_rows(action, schedule, grid, warm=None)

    if refine_min_gap and len(grid) >= 5:
        omega = np.array([r[3] for r in rows])
        wmin = float(omega.min())
        mask = omega <= 10.0 * wmin
        lo = max(0, int(np.argmax(mask)) - 1)
        hi = min(len(grid) - 1, len(mask) - 1 - int(np.argmax(mask[::-1])) + 1)
        if hi > lo:
            step = np.min(np.diff(grid[lo : hi + 1])) / 10.0
            fine = np.arange(grid[lo], grid[hi] + step / 2, step)
            fine = np.setdiff1d(np.round(fine, 12), np.round(grid, 12))
            if len(fine):
                rows += _profile_rows(action, schedule, fine, warm=None)
                rows.sort(key=lambda r: r[0])

    s = np.array([r[0] for r in rows])
    e0 = np.array([r[1] for r in rows])
    e1 = np.array([r[2] for r in rows])
    omega = np.array([r[3] for r in rows])
    deg = omega < DEGENERACY_THRESHOLD_GHZ
    if deg.any():
        warnings.warn(
            "near-degenerate eigenvalues: transition moments are basis-dependent there",
            RuntimeWarning,
        )
    return GapProfile(
        s=s,
        e0_ghz=e0,
        e1_ghz=e1,
        omega10_ghz=omega,
        a_elem=np.array([r[4] for r in rows]),
        hamming=np.array([r[5] for r in rows]),
        pol0=np.vstack([r[6] for r in rows]),
        pol1=np.vstack([r[7] for r in rows]),
        degenerate=deg,
    )


def min_gap(
    instance: Instance,
    schedule: Schedule,
    coarse_points: int = 81,
    s_tol: float = 1e-5,
) -> tuple[float, float]:
    """Location and size of the minimum gap via golden-section refinement."""
    action = HamiltonianAction(instance)

    def gap(s: float, v0=None) -> float:
        pairs = lowest_eigenpairs(action, s, schedule, k=2, v0=v0)
        return pairs[1][0] - pairs[0][0]

    grid = default_s_grid(coarse_points)
    values = []
    v0 = None
    for s in grid:
        pairs = lowest_eigenpairs(action, float(s), schedule, k=2, v0=v0)
        v0 = pairs[0][1]
        values.append(pairs[1][0] - pairs[0][0])
    values = np.array(values)
    if values.max() - values.min() < 1e-12:
        raise EigensolverError("flat gap profile: no interior minimum to refine")
    k = int(np.argmin(values))
    lo = grid[max(0, k - 1)]
    hi = grid[min(len(grid) - 1, k + 1)]

    invphi = (np.sqrt(5.0) - 1) / 2
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = gap(x1), gap(x2)
    while hi - lo > s_tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = gap(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = gap(x2)
    s_star = (lo + hi) / 2
    return float(s_star), float(gap(s_star))
