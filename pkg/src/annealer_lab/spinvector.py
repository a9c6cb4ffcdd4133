"""Classical product-state paths: spin-vector energies, SVMC dynamics, and
the two-angle effective potential with bifurcation tracking.

Each qubit is a unit vector in the xz plane at angle theta from the x axis,
so <sigma^x> = cos(theta) and <sigma^z> = sin(theta).  theta = 0 is the
transverse ground state; theta = +-pi/2 are the Ising states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .model import (
    Instance,
    Schedule,
    known_ground_state,
    neighbour_arrays,
    schedule_at,
    thermal_energy_ghz,
)
from .results import RunResult, make_run_result, replica_generators

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pure-numpy fallback keeps the package importable
    _HAVE_NUMBA = False

    def _njit(*a, **k):
        def wrap(fn):
            return fn

        return wrap


_SWEEP_BLOCK = 128
_REPLICA_CHUNK = 512


@_njit(cache=True, fastmath=True)
def _sweep_block_kernel(theta, sin_t, cos_t, h, nbr, wts, degs, a_blk, b_blk, rand_blk, kt, width):
    """Sequential per-qubit Metropolis updates for one block of sweeps.

    All state arrays are float32 (the Monte Carlo noise floor is far above
    single precision).  rand_blk[r, t, :n] are proposal uniforms,
    [r, t, n:] acceptance uniforms; the layout matches the numpy fallback so
    both paths consume the replica streams the same way.
    """
    n_rep, n = theta.shape
    pi = np.float32(np.pi)
    two_pi = np.float32(2.0 * np.pi)
    one = np.float32(1.0)
    two = np.float32(2.0)
    for t in range(a_blk.shape[0]):
        a = a_blk[t]
        b = b_blk[t]
        for q in range(n):
            d = degs[q]
            for r in range(n_rep):
                prop = theta[r, q] + (two * rand_blk[r, t, q] - one) * width
                while prop > pi:
                    prop -= two_pi
                while prop < -pi:
                    prop += two_pi
                f = h[q]
                for k in range(d):
                    f += wts[q, k] * sin_t[r, nbr[q, k]]
                s_new = np.sin(prop)
                c_new = np.cos(prop)
                d_e = -a * (c_new - cos_t[r, q]) - b * (s_new - sin_t[r, q]) * f
                if d_e <= np.float32(0.0) or rand_blk[r, t, n + q] < np.exp(-d_e / kt):
                    theta[r, q] = prop
                    sin_t[r, q] = s_new
                    cos_t[r, q] = c_new


class CoarseGridError(RuntimeError):
    """Minimum tracking lost between grid points; densify the grid."""


@dataclass(frozen=True)
class SVMCParams:
    """Run controls for spin-vector Monte Carlo."""

    sweeps: int
    temperature_mk: float
    schedule: Schedule
    proposal_width: float = np.pi / 2
    replicas: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps >= 1 required")
        if self.temperature_mk <= 0:
            raise ValueError("temperature must be positive")
        if self.replicas < 1:
            raise ValueError("replicas >= 1 required")
        if self.proposal_width <= 0:
            raise ValueError("proposal width must be positive")


def sv_energy(instance: Instance, angles: np.ndarray, a_ghz: float, b_ghz: float) -> float:
    """Product-state energy -A sum cos(theta) - B (h.sin + sum J sin sin) in GHz."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (instance.num_qubits,):
        raise ValueError(f"angle vector length {angles.shape} != ({instance.num_qubits},)")
    sin = np.sin(angles)
    h = instance.field_array()
    i_idx, j_idx, vals = instance.edge_arrays()
    ising = np.dot(h, sin) + np.dot(vals, sin[i_idx] * sin[j_idx])
    return float(-a_ghz * np.cos(angles).sum() - b_ghz * ising)


def _wrap(theta: np.ndarray) -> np.ndarray:
    return np.mod(theta + np.pi, 2 * np.pi) - np.pi


def _metropolis_sweeps(
    theta: np.ndarray,
    instance: Instance,
    gens: list[np.random.Generator],
    s_values: np.ndarray,
    schedule: Schedule,
    kt_ghz: float,
    width: float,
) -> np.ndarray:
    """Sequential per-qubit Metropolis sweeps, vectorised over replicas.

    ``theta`` has shape (replicas, n).  Each replica consumes one uniform
    block of shape (2n,) per sweep from its own generator, independent of
    how replicas are chunked.
    """
    n = instance.num_qubits
    h = instance.field_array()
    nbr, wts = neighbour_arrays(instance)
    # zero-padded neighbour slots carry zero weight, so the full padded width is safe
    degs = np.full(n, nbr.shape[1], dtype=np.int64)
    a_all = np.interp(s_values, schedule.s, schedule.a_ghz)
    b_all = np.interp(s_values, schedule.s, schedule.b_ghz)

    if _HAVE_NUMBA:
        theta32 = theta.astype(np.float32)
        sin32 = np.sin(theta32)
        cos32 = np.cos(theta32)
        h32 = h.astype(np.float32)
        wts32 = wts.astype(np.float32)
        nbr32 = nbr.astype(np.int64)
        rand = np.empty((theta.shape[0], min(_SWEEP_BLOCK, len(s_values)), 2 * n), dtype=np.float32)
        for start in range(0, len(s_values), _SWEEP_BLOCK):
            stop = min(start + _SWEEP_BLOCK, len(s_values))
            blk = stop - start
            if blk != rand.shape[1]:
                rand = np.empty((theta.shape[0], blk, 2 * n), dtype=np.float32)
            for r, g in enumerate(gens):
                g.random(out=rand[r], dtype=np.float32)
            _sweep_block_kernel(
                theta32,
                sin32,
                cos32,
                h32,
                nbr32,
                wts32,
                degs,
                a_all[start:stop].astype(np.float32),
                b_all[start:stop].astype(np.float32),
                rand,
                np.float32(kt_ghz),
                np.float32(width),
            )
        theta[:] = theta32
        return theta

    sin = np.sin(theta)
    cos = np.cos(theta)
    rand = np.empty((theta.shape[0], min(_SWEEP_BLOCK, len(s_values)), 2 * n))
    for start in range(0, len(s_values), _SWEEP_BLOCK):
        stop = min(start + _SWEEP_BLOCK, len(s_values))
        blk = stop - start
        if blk != rand.shape[1]:
            rand = np.empty((theta.shape[0], blk, 2 * n))
        for r, g in enumerate(gens):
            g.random(out=rand[r])
        for t in range(blk):
            a, b = a_all[start + t], b_all[start + t]
            for q in range(n):
                prop = _wrap(theta[:, q] + (2.0 * rand[:, t, q] - 1.0) * width)
                f_q = h[q] + np.sum(wts[q] * sin[:, nbr[q]], axis=1)
                d_e = -a * (np.cos(prop) - cos[:, q]) - b * (np.sin(prop) - sin[:, q]) * f_q
                accept = rand[:, t, n + q] < np.exp(np.minimum(0.0, -d_e / kt_ghz))
                theta[accept, q] = prop[accept]
                sin[accept, q] = np.sin(prop[accept])
                cos[accept, q] = np.cos(prop[accept])
    return theta


def project_spins(angles: np.ndarray) -> np.ndarray:
    """sign(sin(theta)) with exact zeros broken deterministically toward +1."""
    return np.where(np.sin(angles) >= 0.0, 1.0, -1.0)


def sample_angles_fixed(
    instance: Instance, a_ghz: float, b_ghz: float, params: SVMCParams
) -> np.ndarray:
    """Replica angles after Metropolis sweeps at a fixed (A, B) point.

    Diagnostic surface used to validate detailed balance against the
    Boltzmann density; the annealing ramp is bypassed.
    """
    gens = replica_generators(params.seed, params.replicas)
    kt = thermal_energy_ghz(params.temperature_mk)
    out = np.empty((params.replicas, instance.num_qubits))
    for start in range(0, params.replicas, _REPLICA_CHUNK):
        stop = min(start + _REPLICA_CHUNK, params.replicas)
        theta = np.zeros((stop - start, instance.num_qubits))
        s_vals = np.zeros(params.sweeps)
        _metropolis_sweeps(
            theta, instance, gens[start:stop], s_vals, _FixedPoint(a_ghz, b_ghz), kt, params.proposal_width
        )
        out[start:stop] = theta
    return out


class _FixedPoint:
    """Schedule stand-in returning one constant (A, B) pair."""

    def __init__(self, a_ghz: float, b_ghz: float):
        self._ab = (float(a_ghz), float(b_ghz))
        self.s = np.array([0.0, 1.0])
        self.a_ghz = np.array([a_ghz, a_ghz])
        self.b_ghz = np.array([b_ghz, b_ghz])


def svmc_run(instance: Instance, params: SVMCParams) -> RunResult:
    """Anneal replicas from theta = 0 and score projected spins against the
    known ground state.  Deterministic for a fixed seed, any worker count."""
    ground, _ = known_ground_state(instance)
    gens = replica_generators(params.seed, params.replicas)
    kt = thermal_energy_ghz(params.temperature_mk)
    if params.sweeps > 1:
        s_values = np.arange(params.sweeps) / (params.sweeps - 1)
    else:
        s_values = np.array([1.0])

    successes = 0
    for start in range(0, params.replicas, _REPLICA_CHUNK):
        stop = min(start + _REPLICA_CHUNK, params.replicas)
        theta = np.zeros((stop - start, instance.num_qubits))
        theta = _metropolis_sweeps(
            theta, instance, gens[start:stop], s_values, params.schedule, kt, params.proposal_width
        )
        spins = project_spins(theta)
        successes += int(np.sum(np.all(spins == ground, axis=1)))

    return make_run_result(
        engine="svmc",
        instance_hash=instance.content_hash(),
        params={
            "sweeps": params.sweeps,
            "temperature_mk": params.temperature_mk,
            "proposal_width": params.proposal_width,
            "replicas": params.replicas,
        },
        successes=successes,
        replicas=params.replicas,
        seed=params.seed,
    )


# ---------------------------------------------------------------------------
# Two-angle effective potential


@dataclass
class ClusterPotential:
    """Closed-form coefficients of the cluster-uniform potential."""

    n_left: int
    n_right: int
    h_left_sum: float
    h_right_sum: float
    j_left_intra: float
    j_right_intra: float
    j_inter: float

    @classmethod
    def from_instance(cls, instance: Instance) -> "ClusterPotential":
        left = set(instance.qubits_with_label_prefix("left"))
        right = set(instance.qubits_with_label_prefix("right"))
        if not left or not right or left | right != set(range(instance.num_qubits)):
            raise ValueError("effective potential needs complete left/right cluster labels")
        jll = jrr = jlr = 0.0
        for (i, j), v in instance.couplings.items():
            if i in left and j in left:
                jll += v
            elif i in right and j in right:
                jrr += v
            else:
                jlr += v
        h = instance.fields
        return cls(
            n_left=len(left),
            n_right=len(right),
            h_left_sum=sum(h[q] for q in left),
            h_right_sum=sum(h[q] for q in right),
            j_left_intra=jll,
            j_right_intra=jrr,
            j_inter=jlr,
        )

    def value(self, a_ghz: float, b_ghz: float, theta_l, theta_r):
        sl, sr = np.sin(theta_l), np.sin(theta_r)
        return -a_ghz * (self.n_left * np.cos(theta_l) + self.n_right * np.cos(theta_r)) - b_ghz * (
            self.h_left_sum * sl
            + self.h_right_sum * sr
            + self.j_left_intra * sl**2
            + self.j_right_intra * sr**2
            + self.j_inter * sl * sr
        )


def effective_potential(
    instance: Instance, s: float, theta_l: float, theta_r: float, schedule: Schedule
) -> float:
    """Cluster-uniform potential V(s, theta_L, theta_R) in GHz."""
    a, b = schedule_at(schedule, s)
    return float(ClusterPotential.from_instance(instance).value(a, b, theta_l, theta_r))


@dataclass
class PotentialSurface:
    """Conditional potential over (s, theta_L) plus tracked minimum paths."""

    s_grid: np.ndarray
    theta_grid: np.ndarray
    v_cond: np.ndarray  # (n_s, n_theta): min over theta_R
    minima_paths: dict[str, np.ndarray] = field(default_factory=dict)  # label -> (n_s, 3) [tl, tr, V]
    bifurcation_s: float | None = None
    crossover_s: float | None = None

    def to_csv(self) -> str:
        lines = ["s,theta_L,V"]
        for i, s in enumerate(self.s_grid):
            for j, t in enumerate(self.theta_grid):
                lines.append(f"{s:.10g},{t:.10g},{self.v_cond[i, j]:.10g}")
        return "\n".join(lines) + "\n"

    def paths_to_csv(self) -> str:
        lines = ["label,s,theta_L,theta_R,V"]
        for label in sorted(self.minima_paths):
            path = self.minima_paths[label]
            for i, s in enumerate(self.s_grid):
                row = path[i]
                if np.isnan(row[0]):
                    continue
                lines.append(f"{label},{s:.10g},{row[0]:.10g},{row[1]:.10g},{row[2]:.10g}")
        return "\n".join(lines) + "\n"


_THETA_TOL = 1e-6


def _conditional_theta_r(pot: ClusterPotential, a: float, b: float, theta_l: float, fine_tol=_THETA_TOL):
    res = minimize_scalar(
        lambda tr: pot.value(a, b, theta_l, tr),
        bounds=(-np.pi / 2, np.pi / 2),
        method="bounded",
        options={"xatol": fine_tol},
    )
    return float(res.x), float(res.fun)


def _refine_theta_l(pot, a, b, lo, hi, fine_tol=_THETA_TOL):
    """Golden-section refinement of a bracketed minimum of g(theta_L)."""
    invphi = (np.sqrt(5.0) - 1) / 2
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1 = _conditional_theta_r(pot, a, b, x1)[1]
    f2 = _conditional_theta_r(pot, a, b, x2)[1]
    while hi - lo > fine_tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = _conditional_theta_r(pot, a, b, x1)[1]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = _conditional_theta_r(pot, a, b, x2)[1]
    tl = (lo + hi) / 2
    tr, v = _conditional_theta_r(pot, a, b, tl)
    return tl, tr, v


def _descend_on_grid(theta_grid, g, start_tl: float) -> int:
    """Walk downhill on the sampled g(theta_L) from the bin nearest start_tl."""
    k = int(np.argmin(np.abs(theta_grid - start_tl)))
    moved = True
    while moved:
        moved = False
        while k > 0 and g[k - 1] < g[k]:
            k -= 1
            moved = True
        while k < len(g) - 1 and g[k + 1] < g[k]:
            k += 1
            moved = True
    return k


def _local_minima_from_grid(pot, a, b, theta_grid, g):
    """Refine every bracketed local minimum of the sampled g(theta_L)."""
    minima = []
    for k in range(len(theta_grid)):
        left_ok = k == 0 or g[k] <= g[k - 1]
        right_ok = k == len(theta_grid) - 1 or g[k] < g[k + 1]
        if left_ok and right_ok:
            lo = theta_grid[max(0, k - 1)]
            hi = theta_grid[min(len(theta_grid) - 1, k + 1)]
            minima.append(_refine_theta_l(pot, a, b, lo, hi))
    merged: list[tuple[float, float, float]] = []
    for m in sorted(minima):
        if not merged or abs(m[0] - merged[-1][0]) > 50 * _THETA_TOL:
            merged.append(m)
    return merged


def trace_minima(
    instance: Instance,
    schedule: Schedule,
    s_grid: np.ndarray | None = None,
    theta_points: int = 181,
) -> PotentialSurface:
    """Follow the instantaneous local minimum from (0, 0) and detect where a
    second minimum appears (bifurcation) and overtakes it (crossover)."""
    pot = ClusterPotential.from_instance(instance)
    s_grid = np.linspace(0.0, 1.0, 101) if s_grid is None else np.asarray(s_grid, dtype=float)
    if len(s_grid) < 5:
        raise CoarseGridError("s grid too coarse to track minima")
    if theta_points < 41:
        raise CoarseGridError("theta grid too coarse to resolve competing minima")
    theta_grid = np.linspace(-np.pi / 2, np.pi / 2, theta_points)

    n_s = len(s_grid)
    v_cond = np.empty((n_s, theta_points))
    path_init = np.full((n_s, 3), np.nan)
    path_second = np.full((n_s, 3), np.nan)

    followed_tl = 0.0
    others_per_s: list[list[tuple[float, float, float]]] = []

    tl_mesh, tr_mesh = np.meshgrid(theta_grid, theta_grid, indexing="ij")
    for i, s in enumerate(s_grid):
        a, b = schedule_at(schedule, float(s))
        v_cond[i] = pot.value(a, b, tl_mesh, tr_mesh).min(axis=1)
        minima = _local_minima_from_grid(pot, a, b, theta_grid, v_cond[i])
        if not minima:
            raise CoarseGridError(f"no local minimum resolved at s={s}")

        # local descent seeded at the previous point keeps us in the followed basin
        k = _descend_on_grid(theta_grid, v_cond[i], followed_tl)
        tl, tr, v = min(minima, key=lambda m: abs(m[0] - theta_grid[k]))
        followed_tl = tl
        path_init[i] = (tl, tr, v)
        others_per_s.append([m for m in minima if abs(m[0] - tl) > 50 * _THETA_TOL])

    # The "second" path is the competing branch of the two-path structure:
    # it counts only if it eventually undercuts the followed minimum.
    # Metastable side minima that never win are not a bifurcation.
    bifurcation_s = None
    crossover_s = None
    crossing = [
        i for i in range(n_s) if others_per_s[i] and min(m[2] for m in others_per_s[i]) < path_init[i, 2] - 1e-12
    ]
    if crossing:
        first_cross = crossing[0]
        crossover_s = float(s_grid[first_cross])
        first_appear = first_cross
        while first_appear > 0 and others_per_s[first_appear - 1]:
            first_appear -= 1
        bifurcation_s = float(s_grid[first_appear])
        for i in range(first_appear, n_s):
            if others_per_s[i]:
                path_second[i] = min(others_per_s[i], key=lambda m: m[2])

    return PotentialSurface(
        s_grid=s_grid,
        theta_grid=theta_grid,
        v_cond=v_cond,
        minima_paths={"initial": path_init, "second": path_second},
        bifurcation_s=bifurcation_s,
        crossover_s=crossover_s,
    )
