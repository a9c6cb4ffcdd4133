"""Path Integral Monte Carlo along the annealing schedule (PIMC-QA).

Suzuki-Trotter mapping onto M imaginary-time slices: slice coupling
K(s) = 0.5*ln(coth(beta*A(s)/M)) ferromagnetic along the time ring, in-slice
Ising energies weighted by (beta/M)*B(s), with beta = h/(kB*T) in 1/GHz.
Each sweep runs single-site Metropolis over all (slice, qubit) pairs plus
one Swendsen-Wang cluster pass per qubit restricted to the imaginary-time
direction (cluster flips Metropolis-accepted on the in-slice action).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Instance, Schedule, known_ground_state, neighbour_arrays, schedule_at, thermal_energy_ghz
from .results import RunResult, make_run_result, replica_generators

_REPLICA_CHUNK = 512

# below this value of beta*A/M the time coupling is numerically infinite:
# worldlines are frozen to their per-qubit majority and move as single spins
_FREEZE_ARG = 1e-12
_K_CAP = 0.5 * float(np.log(1.0 / np.tanh(_FREEZE_ARG)))

RANDOM_SLICE = "random_slice"
MAJORITY_VOTE = "majority_vote"


@dataclass(frozen=True)
class PimcParams:
    """Run controls for PIMC-QA."""

    trotter_slices: int = 64
    temperature_mk: float = 15.5
    sweeps: int = 1000
    replicas: int = 1000
    seed: int = 0
    readout: str = RANDOM_SLICE

    def __post_init__(self):
        if self.trotter_slices < 2:
            raise ValueError("need at least 2 Trotter slices")
        if self.temperature_mk <= 0:
            raise ValueError("temperature must be positive")
        if self.sweeps < 1 or self.replicas < 1:
            raise ValueError("sweeps and replicas must be positive")
        if self.readout not in (RANDOM_SLICE, MAJORITY_VOTE):
            raise ValueError(f"unknown readout {self.readout!r}")


def slice_coupling(a_ghz: float, beta_per_ghz: float, slices: int) -> float:
    """Imaginary-time coupling K = 0.5 ln coth(beta*A/M), capped where the
    infinite-coupling limit takes over (A below the freeze threshold)."""
    arg = beta_per_ghz * a_ghz / slices
    if arg < _FREEZE_ARG:
        return _K_CAP
    return float(0.5 * np.log(1.0 / np.tanh(arg)))


def worldline_action(
    instance: Instance, world: np.ndarray, a_ghz: float, b_ghz: float, temperature_mk: float
) -> float:
    """Suzuki-Trotter action of one worldline configuration (M, n)."""
    world = np.asarray(world, dtype=float)
    slices = world.shape[0]
    beta = 1.0 / thermal_energy_ghz(temperature_mk)
    k = slice_coupling(a_ghz, beta, slices)
    h = instance.field_array()
    i_idx, j_idx, vals = instance.edge_arrays()
    e_slices = -(world @ h)
    if len(vals):
        e_slices -= (world[:, i_idx] * world[:, j_idx]) @ vals
    s_pot = (beta * b_ghz / slices) * float(e_slices.sum())
    s_time = -k * float(np.sum(world * np.roll(world, -1, axis=0)))
    return s_pot + s_time


def _majority(world: np.ndarray) -> np.ndarray:
    """Per-qubit majority over slices, ties toward +1.  world: (R, M, n)."""
    return np.where(world.sum(axis=1) >= 0, 1.0, -1.0)


def _ring_labels(active: np.ndarray) -> np.ndarray:
    """Cluster labels along the time ring per row.

    ``active[r, m]`` says slices m and m+1 (mod M) are bonded.  Slices before
    the first cluster start wrap onto the last cluster through the m = M-1
    bond.  Rows with every bond active are one cluster (label 0).
    """
    start = ~np.roll(active, 1, axis=1)  # no bond to the previous slice
    labels = np.cumsum(start, axis=1) - 1
    n_clusters = labels[:, -1] + 1
    wrap = labels < 0
    labels = np.where(wrap, np.maximum(n_clusters - 1, 0)[:, None], labels)
    return labels


def _sweep_qubit_sites(world, q, f_q, k, b_coef, u_site):
    """Checkerboard single-site Metropolis over the time ring for one qubit."""
    slices = world.shape[1]
    for parity in (0, 1):
        w_q = world[:, :, q]
        neigh = np.roll(w_q, 1, axis=1) + np.roll(w_q, -1, axis=1)
        d_s = 2.0 * b_coef * w_q * f_q + 2.0 * k * w_q * neigh
        sel = slice(parity, slices, 2)
        accept = u_site[:, sel] < np.exp(np.minimum(0.0, -d_s[:, sel]))
        world[:, sel, q] = np.where(accept, -w_q[:, sel], w_q[:, sel])


def _sweep_qubit_clusters(world, q, f_q, k, b_coef, u_bond, u_flip):
    """Swendsen-Wang pass along imaginary time for one qubit."""
    w_q = world[:, :, q]
    n_rep, slices = w_q.shape
    aligned = w_q * np.roll(w_q, -1, axis=1) > 0
    p_bond = -np.expm1(-2.0 * k)
    active = aligned & (u_bond < p_bond)
    labels = _ring_labels(active)

    d_s = 2.0 * b_coef * w_q * f_q
    flat = labels + (np.arange(n_rep) * slices)[:, None]
    cluster_ds = np.bincount(flat.ravel(), weights=d_s.ravel(), minlength=n_rep * slices)
    cluster_ds = cluster_ds.reshape(n_rep, slices)

    # one uniform per cluster, taken at its start slice (or slice 0 when the
    # whole ring is a single cluster)
    start = ~np.roll(active, 1, axis=1)
    cluster_u = np.ones((n_rep, slices))
    rows, cols = np.nonzero(start)
    cluster_u[rows, labels[rows, cols]] = u_flip[rows, cols]
    whole = ~start.any(axis=1)
    cluster_u[whole, 0] = u_flip[whole, 0]

    accept = cluster_u < np.exp(np.minimum(0.0, -cluster_ds))
    flip = np.take_along_axis(accept, labels, axis=1)
    world[:, :, q] = np.where(flip, -w_q, w_q)


def _run_worldlines(
    instance: Instance,
    gens: list[np.random.Generator],
    params: PimcParams,
    ab_of_sweep,
) -> np.ndarray:
    """Evolve a chunk of replicas; returns worldlines (R, M, n).

    Per sweep each replica consumes one uniform block of 3*M*n values (site,
    bond, flip), so results are chunking-independent.
    """
    n = instance.num_qubits
    slices = params.trotter_slices
    n_rep = len(gens)
    beta = 1.0 / thermal_energy_ghz(params.temperature_mk)
    h = instance.field_array()
    nbr, wts = neighbour_arrays(instance)

    world = np.empty((n_rep, slices, n))
    for r, g in enumerate(gens):
        world[r] = np.where(g.random((slices, n)) < 0.5, 1.0, -1.0)

    frozen = False
    for t in range(params.sweeps):
        a, b = ab_of_sweep(t)
        k = slice_coupling(a, beta, slices)
        b_coef = beta * b / slices
        if not frozen and k >= _K_CAP:
            world[:] = _majority(world)[:, None, :]
            frozen = True

        rand = np.empty((n_rep, 3 * slices * n))
        for r, g in enumerate(gens):
            rand[r] = g.random(3 * slices * n)
        u_site = rand[:, : slices * n].reshape(n_rep, slices, n)
        u_bond = rand[:, slices * n : 2 * slices * n].reshape(n_rep, slices, n)
        u_flip = rand[:, 2 * slices * n :].reshape(n_rep, slices, n)

        for q in range(n):
            f_q = h[q] + np.einsum("rmk,k->rm", world[:, :, nbr[q]], wts[q])
            _sweep_qubit_sites(world, q, f_q, k, b_coef, u_site[:, :, q])
            _sweep_qubit_clusters(world, q, f_q, k, b_coef, u_bond[:, :, q], u_flip[:, :, q])
    return world


def _read_out(world: np.ndarray, params: PimcParams, gens: list[np.random.Generator]) -> np.ndarray:
    if params.readout == MAJORITY_VOTE:
        return _majority(world)
    slices = world.shape[1]
    picks = np.array([g.integers(0, slices) for g in gens])
    return world[np.arange(world.shape[0]), picks, :]


def pimcqa_run(instance: Instance, schedule: Schedule, params: PimcParams) -> RunResult:
    """Anneal worldline replicas along the schedule and score the readout
    against the known ground state."""
    ground, _ = known_ground_state(instance)
    gens = replica_generators(params.seed, params.replicas)
    if params.sweeps > 1:
        s_values = np.arange(params.sweeps) / (params.sweeps - 1)
    else:
        s_values = np.array([1.0])

    def ab_of_sweep(t):
        return schedule_at(schedule, float(s_values[t]))

    successes = 0
    for lo in range(0, params.replicas, _REPLICA_CHUNK):
        hi = min(lo + _REPLICA_CHUNK, params.replicas)
        world = _run_worldlines(instance, gens[lo:hi], params, ab_of_sweep)
        spins = _read_out(world, params, gens[lo:hi])
        successes += int(np.sum(np.all(spins == ground, axis=1)))

    return make_run_result(
        engine="pimc-qa",
        instance_hash=instance.content_hash(),
        params={
            "trotter_slices": params.trotter_slices,
            "temperature_mk": params.temperature_mk,
            "sweeps": params.sweeps,
            "replicas": params.replicas,
            "readout": params.readout,
        },
        successes=successes,
        replicas=params.replicas,
        seed=params.seed,
    )


def sample_fixed_point(
    instance: Instance, a_ghz: float, b_ghz: float, params: PimcParams
) -> np.ndarray:
    """Readout spins of every replica equilibrated at fixed (A, B).

    Diagnostic surface: the random-slice diagonal distribution converges to
    diag(exp(-beta H))/Z as the Trotter number grows.
    """
    gens = replica_generators(params.seed, params.replicas)
    out = np.empty((params.replicas, instance.num_qubits))
    for lo in range(0, params.replicas, _REPLICA_CHUNK):
        hi = min(lo + _REPLICA_CHUNK, params.replicas)
        world = _run_worldlines(instance, gens[lo:hi], params, lambda t: (a_ghz, b_ghz))
        out[lo:hi] = _read_out(world, params, gens[lo:hi])
    return out
