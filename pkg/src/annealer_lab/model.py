"""Ising instances, annealing schedules and exact classical oracles.

Conventions used throughout the package:

* Classical energy of a spin configuration ``s`` (entries in {-1, +1}) is
  ``E = -sum_mu h_mu s_mu - sum_(mu,nu) J_munu s_mu s_nu`` (dimensionless;
  multiply by B(s) to get GHz).
* A spin aligns with the sign of its local field: for ``E = -h*s`` the
  minimum is at ``s = sign(h)``.
* Energies, A(s) and B(s) are stored as frequency equivalents E/h in GHz.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

KB_OVER_H_GHZ_PER_K = 20.836619  # Boltzmann constant over Planck constant

CELL_SIZE = 8  # qubits per unit cell (two shores of four)
_SHORE = 4

BRUTE_FORCE_MAX_QUBITS = 24


class DegenerateInstanceError(ValueError):
    """False and global minima coincide; downstream analyses need a unique optimum."""


class ScheduleValidationError(ValueError):
    """Schedule samples violate monotonicity or endpoint requirements."""


class SizeCapError(ValueError):
    """Exhaustive enumeration requested beyond the hard qubit cap."""


def thermal_energy_ghz(temperature_mk: float) -> float:
    """k_B*T expressed as a frequency in GHz for T in millikelvin."""
    return KB_OVER_H_GHZ_PER_K * temperature_mk * 1e-3


@dataclass(frozen=True)
class PhysicalConstants:
    """Fixed unit conversion plus the run-level annealing time."""

    t_qa_us: float = 20.0
    kb_over_h_ghz_per_k: float = KB_OVER_H_GHZ_PER_K

    def __post_init__(self):
        if self.t_qa_us <= 0:
            raise ValueError(f"annealing time must be positive, got {self.t_qa_us}")

    @property
    def t_qa_seconds(self) -> float:
        return self.t_qa_us * 1e-6


@dataclass(frozen=True)
class Instance:
    """An Ising problem on an explicit graph with per-qubit cluster labels.

    ``fields`` maps qubit -> h_mu, ``couplings`` maps (i, j) with i < j to
    J_ij.  ``cluster_label`` tags each qubit with "left"/"right" (probe) or
    "black<k>"/"grey<k>" (motif glass).
    """

    num_qubits: int
    fields: dict[int, float]
    couplings: dict[tuple[int, int], float]
    cluster_label: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.fields) != set(range(self.num_qubits)):
            raise ValueError("fields must be keyed by exactly 0..num_qubits-1")
        for (i, j) in self.couplings:
            if i == j:
                raise ValueError(f"self-coupling on qubit {i}")
            if not (0 <= i < j < self.num_qubits):
                raise ValueError(f"coupling key ({i}, {j}) must satisfy 0 <= i < j < n")
        if self.cluster_label and set(self.cluster_label) != set(range(self.num_qubits)):
            raise ValueError("cluster_label, when present, must cover all qubits")

    def field_array(self) -> np.ndarray:
        return np.array([self.fields[q] for q in range(self.num_qubits)], dtype=float)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge endpoints and weights as parallel arrays (deterministic order)."""
        keys = sorted(self.couplings)
        if not keys:
            z = np.zeros(0, dtype=int)
            return z, z.copy(), np.zeros(0, dtype=float)
        i_idx = np.array([k[0] for k in keys], dtype=int)
        j_idx = np.array([k[1] for k in keys], dtype=int)
        vals = np.array([self.couplings[k] for k in keys], dtype=float)
        return i_idx, j_idx, vals

    def qubits_with_label_prefix(self, prefix: str) -> list[int]:
        return [q for q in range(self.num_qubits) if self.cluster_label.get(q, "").startswith(prefix)]

    def to_json(self) -> str:
        keys = sorted(self.couplings)
        payload = {
            "num_qubits": self.num_qubits,
            "h": [self.fields[q] for q in range(self.num_qubits)],
            "J": [[i, j, self.couplings[(i, j)]] for (i, j) in keys],
            "clusters": [self.cluster_label.get(q, "") for q in range(self.num_qubits)],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        payload = json.loads(text)
        n = int(payload["num_qubits"])
        fields = {q: float(h) for q, h in enumerate(payload["h"])}
        couplings = {}
        for i, j, v in payload["J"]:
            i, j = int(i), int(j)
            if i > j:
                i, j = j, i
            couplings[(i, j)] = float(v)
        clusters = payload.get("clusters") or []
        labels = {q: str(lab) for q, lab in enumerate(clusters) if lab}
        return cls(num_qubits=n, fields=fields, couplings=couplings, cluster_label=labels)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def probe_topology(h_l: float, h_r: float, j: float) -> Instance:
    """Two complete-bipartite 4x4 cells plus 4 edges pairing corresponding qubits.

    Left cell is qubits 0..7 (fields h_l), right cell 8..15 (fields h_r);
    no preconditions checked here -- use :func:`build_probe` for validated
    construction.
    """
    fields = {q: h_l for q in range(CELL_SIZE)}
    fields.update({q: h_r for q in range(CELL_SIZE, 2 * CELL_SIZE)})
    couplings: dict[tuple[int, int], float] = {}
    for cell_start in (0, CELL_SIZE):
        for a in range(_SHORE):
            for b in range(_SHORE, CELL_SIZE):
                couplings[(cell_start + a, cell_start + b)] = j
    for k in range(_SHORE):
        couplings[(_SHORE + k, CELL_SIZE + k)] = j
    labels = {q: "left" for q in range(CELL_SIZE)}
    labels.update({q: "right" for q in range(CELL_SIZE, 2 * CELL_SIZE)})
    return Instance(num_qubits=2 * CELL_SIZE, fields=fields, couplings=couplings, cluster_label=labels)


def build_probe(h_l: float, h_r: float = -1.0, j: float = 1.0) -> Instance:
    """16-qubit two-cluster probe with one global and one false minimum.

    The false/global energy split is n*(J - 2*h_l) with n = 8, so h_l must
    stay below J/2 for the minima to be distinct.
    """
    if j <= 0:
        raise ValueError(f"coupling must be ferromagnetic positive, got J={j}")
    if h_l <= 0:
        raise ValueError(f"left field must be positive, got h_l={h_l}")
    if h_l >= j / 2:
        raise DegenerateInstanceError(
            f"h_l={h_l} >= J/2={j / 2}: false and global minima coincide or invert"
        )
    return probe_topology(h_l, h_r, j)


@dataclass(frozen=True)
class MotifSpec:
    """Layout recipe for a glass of probe motifs.

    Black cells carry ``h_strong``, grey cells ``h_weak``; each grey attaches
    ferromagnetically to one black cell, and grid-adjacent black cells are
    linked by 4-edge bundles with random +-1 signs drawn from ``glass_seed``.
    """

    n_black_cells: int
    n_grey_cells: int
    glass_seed: int = 0
    h_weak: float = 0.44
    h_strong: float = -1.0
    layout: tuple[int, int] | None = None  # (rows, cols) of the black-cell grid

    def __post_init__(self):
        if self.n_black_cells < 1:
            raise ValueError("need at least one black cell")
        if self.n_grey_cells < 0 or self.n_grey_cells > self.n_black_cells:
            raise ValueError("grey cell count must be in [0, n_black_cells]")
        if self.layout is not None:
            rows, cols = self.layout
            if rows * cols < self.n_black_cells:
                raise ValueError(f"layout {self.layout} too small for {self.n_black_cells} black cells")

    def grid_shape(self) -> tuple[int, int]:
        if self.layout is not None:
            return self.layout
        rows = max(1, int(np.floor(np.sqrt(self.n_black_cells))))
        cols = int(np.ceil(self.n_black_cells / rows))
        return rows, cols

    @property
    def num_qubits(self) -> int:
        return CELL_SIZE * (self.n_black_cells + self.n_grey_cells)


def _boundary_order(positions: list[tuple[int, int]], rows: int, cols: int) -> list[int]:
    """Indices of black cells on the grid boundary, row-major order."""
    on_edge = []
    occupied = set(positions)
    for idx, (r, c) in enumerate(positions):
        if r in (0, rows - 1) or c in (0, cols - 1):
            on_edge.append(idx)
            continue
        neighbours = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
        if any(p not in occupied for p in neighbours):
            on_edge.append(idx)  # ragged last row exposes interior cells
    return on_edge


def generate_motif_glass(spec: MotifSpec) -> Instance:
    """Deterministic glass of probe motifs; pure function of the spec.

    Cell indexing puts each grey immediately before its host black cell, so
    the single-motif glass reproduces :func:`build_probe` exactly.
    """
    rows, cols = spec.grid_shape()
    positions = [(k // cols, k % cols) for k in range(spec.n_black_cells)]

    boundary = _boundary_order(positions, rows, cols)
    host_order = boundary[0::2] + boundary[1::2]  # alternate attachment
    interior = [k for k in range(spec.n_black_cells) if k not in boundary]
    host_order = host_order + interior
    if spec.n_grey_cells > 0 and spec.n_black_cells == 0:
        raise ValueError("grey cell has no black neighbour")
    grey_host = {host_order[g]: g for g in range(spec.n_grey_cells)}

    # Cell ordering: grey (if any) precedes its host black, blacks row-major.
    cell_of_black: dict[int, int] = {}
    cell_of_grey: dict[int, int] = {}
    next_cell = 0
    for b in range(spec.n_black_cells):
        if b in grey_host:
            cell_of_grey[grey_host[b]] = next_cell
            next_cell += 1
        cell_of_black[b] = next_cell
        next_cell += 1

    n_cells = spec.n_black_cells + spec.n_grey_cells
    fields: dict[int, float] = {}
    labels: dict[int, str] = {}
    couplings: dict[tuple[int, int], float] = {}

    def base(cell: int) -> int:
        return CELL_SIZE * cell

    for b, cell in cell_of_black.items():
        for q in range(base(cell), base(cell) + CELL_SIZE):
            fields[q] = spec.h_strong
            labels[q] = f"black{b}"
    for g, cell in cell_of_grey.items():
        for q in range(base(cell), base(cell) + CELL_SIZE):
            fields[q] = spec.h_weak
            labels[q] = f"grey{g}"

    for cell in range(n_cells):
        for a in range(_SHORE):
            for b in range(_SHORE, CELL_SIZE):
                couplings[(base(cell) + a, base(cell) + b)] = 1.0

    def bundle(cell_a: int, shore_a: int, cell_b: int, shore_b: int, signs) -> None:
        for k in range(_SHORE):
            qa = base(cell_a) + shore_a + k
            qb = base(cell_b) + shore_b + k
            lo, hi = min(qa, qb), max(qa, qb)
            couplings[(lo, hi)] = float(signs[k])

    # Grey -> host black: ferromagnetic, grey second shore to black first shore.
    for b, g in grey_host.items():
        bundle(cell_of_grey[g], _SHORE, cell_of_black[b], 0, np.ones(_SHORE))

    # Black-black bundles with i.i.d. random signs, fixed traversal order.
    rng = np.random.default_rng(spec.glass_seed)
    pos_to_black = {p: b for b, p in enumerate(positions)}
    for b, (r, c) in enumerate(positions):
        for dr, dc, shore in ((0, 1, _SHORE), (1, 0, 0)):  # right: shore 2, down: shore 1
            nb = pos_to_black.get((r + dr, c + dc))
            if nb is None:
                continue
            signs = rng.choice([-1.0, 1.0], size=_SHORE)
            bundle(cell_of_black[b], shore, cell_of_black[nb], shore, signs)

    return Instance(num_qubits=CELL_SIZE * n_cells, fields=fields, couplings=couplings, cluster_label=labels)


def neighbour_arrays(instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit neighbour indices and couplings, zero-padded to equal width."""
    adj: list[list[tuple[int, float]]] = [[] for _ in range(instance.num_qubits)]
    for (i, j), v in sorted(instance.couplings.items()):
        adj[i].append((j, v))
        adj[j].append((i, v))
    deg = max((len(a) for a in adj), default=0)
    nbr = np.zeros((instance.num_qubits, max(deg, 1)), dtype=int)
    wts = np.zeros((instance.num_qubits, max(deg, 1)))
    for q, lst in enumerate(adj):
        for k, (j, v) in enumerate(lst):
            nbr[q, k] = j
            wts[q, k] = v
    return nbr, wts


def energy(instance: Instance, spins: np.ndarray) -> float:
    """Dimensionless Ising energy -h.s - sum J_ij s_i s_j."""
    spins = np.asarray(spins, dtype=float)
    if spins.shape != (instance.num_qubits,):
        raise ValueError(f"spin vector length {spins.shape} != ({instance.num_qubits},)")
    h = instance.field_array()
    i_idx, j_idx, vals = instance.edge_arrays()
    return float(-np.dot(h, spins) - np.dot(vals, spins[i_idx] * spins[j_idx]))


def _spins_from_indices(indices: np.ndarray, num_qubits: int) -> np.ndarray:
    """Map basis indices to +-1 spins; bit 0 of qubit mu means s_mu = +1."""
    bits = (indices[:, None] >> np.arange(num_qubits)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _energies_for_indices(instance: Instance, indices: np.ndarray) -> np.ndarray:
    spins = _spins_from_indices(indices, instance.num_qubits)
    h = instance.field_array()
    i_idx, j_idx, vals = instance.edge_arrays()
    e = -spins @ h
    if len(vals):
        e -= (spins[:, i_idx] * spins[:, j_idx]) @ vals
    return e


def brute_force_ground(
    instance: Instance, degeneracy_rtol: float = 1e-9
) -> tuple[np.ndarray, float, int]:
    """Exhaustive scan: a minimising configuration, its energy, and the count
    of configurations tied with it (relative tolerance on the energy scale)."""
    n = instance.num_qubits
    if n > BRUTE_FORCE_MAX_QUBITS:
        raise SizeCapError(f"{n} qubits exceeds exhaustive cap of {BRUTE_FORCE_MAX_QUBITS}")
    scale = max(1.0, abs(instance.field_array()).sum() + abs(instance.edge_arrays()[2]).sum())
    best_e = np.inf
    best_idx = 0
    degeneracy = 0
    chunk = 1 << 18
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        e = _energies_for_indices(instance, idx)
        lo = float(e.min())
        if lo < best_e - degeneracy_rtol * scale:
            best_e = lo
            best_idx = int(idx[int(np.argmin(e))])
            degeneracy = int(np.sum(e <= best_e + degeneracy_rtol * scale))
        elif lo <= best_e + degeneracy_rtol * scale:
            degeneracy += int(np.sum(e <= best_e + degeneracy_rtol * scale))
    spins = _spins_from_indices(np.array([best_idx]), n)[0]
    return spins, float(best_e), degeneracy


def single_flip_stable(instance: Instance, spins: np.ndarray, tol: float = 1e-9) -> bool:
    """True when no single spin flip lowers the energy."""
    spins = np.asarray(spins, dtype=float)
    h = instance.field_array()
    i_idx, j_idx, vals = instance.edge_arrays()
    local = h.copy()
    np.add.at(local, i_idx, vals * spins[j_idx])
    np.add.at(local, j_idx, vals * spins[i_idx])
    # dE of flipping qubit q is 2 * s_q * local_q
    return bool(np.all(2.0 * spins * local >= -tol))


def cell_ground_state(instance: Instance) -> tuple[np.ndarray, float]:
    """Exact optimum over cell-uniform configurations, verified 1-flip stable.

    Valid for glass instances whose cells are internally ferromagnetic; the
    stability check guards the cell-uniform assumption at full-spin level.
    """
    groups: dict[str, list[int]] = {}
    for q in range(instance.num_qubits):
        lab = instance.cluster_label.get(q)
        if lab is None:
            raise ValueError("cell_ground_state needs cluster labels on every qubit")
        groups.setdefault(lab, []).append(q)
    names = sorted(groups)
    n_cells = len(names)
    if n_cells > 28:
        raise SizeCapError(f"{n_cells} cells exceeds cell-level enumeration cap")
    cell_of = {}
    for c, name in enumerate(names):
        for q in groups[name]:
            cell_of[q] = c

    h = instance.field_array()
    cell_field = np.zeros(n_cells)
    for q in range(instance.num_qubits):
        cell_field[cell_of[q]] += h[q]
    i_idx, j_idx, vals = instance.edge_arrays()
    intra_const = 0.0
    inter: dict[tuple[int, int], float] = {}
    for i, j, v in zip(i_idx, j_idx, vals):
        ci, cj = cell_of[int(i)], cell_of[int(j)]
        if ci == cj:
            intra_const += v
        else:
            key = (min(ci, cj), max(ci, cj))
            inter[key] = inter.get(key, 0.0) + v
    pairs = sorted(inter)
    pi = np.array([p[0] for p in pairs], dtype=int)
    pj = np.array([p[1] for p in pairs], dtype=int)
    pw = np.array([inter[p] for p in pairs])

    best_e = np.inf
    best_idx = 0
    chunk = 1 << 18
    for start in range(0, 1 << n_cells, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n_cells), dtype=np.int64)
        sigma = _spins_from_indices(idx, n_cells)
        e = -sigma @ cell_field
        if len(pw):
            e -= (sigma[:, pi] * sigma[:, pj]) @ pw
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_idx = int(idx[k])
    sigma = _spins_from_indices(np.array([best_idx]), n_cells)[0]
    spins = np.empty(instance.num_qubits)
    for q in range(instance.num_qubits):
        spins[q] = sigma[cell_of[q]]
    total = best_e - intra_const
    if not np.isclose(total, energy(instance, spins), rtol=0, atol=1e-9):
        raise RuntimeError("cell-level bookkeeping mismatch")
    if not single_flip_stable(instance, spins):
        raise RuntimeError("cell-uniform optimum is not single-flip stable; oracle invalid here")
    return spins, float(total)


_GROUND_CACHE: dict[str, tuple[np.ndarray, float]] = {}


def known_ground_state(instance: Instance) -> tuple[np.ndarray, float]:
    """Ground-state oracle: exhaustive for small systems, cell-level for glasses.

    Results are cached by instance hash (pure function, safe to memoise).
    """
    key = instance.content_hash()
    if key not in _GROUND_CACHE:
        if len(_GROUND_CACHE) > 64:
            _GROUND_CACHE.clear()
        if instance.num_qubits <= BRUTE_FORCE_MAX_QUBITS:
            spins, e, _ = brute_force_ground(instance)
        else:
            spins, e = cell_ground_state(instance)
        _GROUND_CACHE[key] = (spins, e)
    spins, e = _GROUND_CACHE[key]
    return spins.copy(), e


@dataclass(frozen=True)
class Schedule:
    """Tabulated annealing envelopes with piecewise-linear interpolation."""

    s: np.ndarray
    a_ghz: np.ndarray
    b_ghz: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        object.__setattr__(self, "a_ghz", np.asarray(self.a_ghz, dtype=float))
        object.__setattr__(self, "b_ghz", np.asarray(self.b_ghz, dtype=float))
        s, a, b = self.s, self.a_ghz, self.b_ghz
        if not (len(s) == len(a) == len(b)) or len(s) < 2:
            raise ScheduleValidationError("need >= 2 aligned samples")
        if not (np.all(np.diff(s) > 0) and abs(s[0]) < 1e-12 and abs(s[-1] - 1) < 1e-12):
            raise ScheduleValidationError("s must increase strictly from 0 to 1")
        if np.any(np.diff(a) > 1e-12):
            raise ScheduleValidationError("A(s) must be non-increasing")
        if np.any(np.diff(b) < -1e-12):
            raise ScheduleValidationError("B(s) must be non-decreasing")
        if abs(a[-1]) > 1e-9:
            raise ScheduleValidationError(f"A(1) must vanish, got {a[-1]}")
        if b[0] <= 0 or a[0] / b[0] < 10:
            raise ScheduleValidationError(
                f"initial transverse dominance requires A(0)/B(0) >= 10, got {a[0]}/{b[0]}"
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["s", "A_GHz", "B_GHz"])
        for row in zip(self.s, self.a_ghz, self.b_ghz):
            writer.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Schedule":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if [h.strip() for h in header] != ["s", "A_GHz", "B_GHz"]:
            raise ScheduleValidationError(f"expected header s,A_GHz,B_GHz, got {header}")
        rows = [tuple(float(v) for v in row) for row in reader if row]
        s, a, b = (np.array(col) for col in zip(*rows))
        return cls(s=s, a_ghz=a, b_ghz=b)


def schedule_at(schedule: Schedule, s: float) -> tuple[float, float]:
    """Piecewise-linear (A, B) in GHz at annealing parameter s."""
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"annealing parameter must lie in [0, 1], got {s}")
    a = float(np.interp(s, schedule.s, schedule.a_ghz))
    b = float(np.interp(s, schedule.s, schedule.b_ghz))
    return a, b


def default_schedule(num_points: int = 1001) -> Schedule:
    """Synthetic documented schedule: A = 6*exp(-2s)*(1-s^30), B = 0.3+5.7s.

    The true hardware envelopes are not public; every s-located quantity in
    this package is conditional on the schedule in use.
    """
    s = np.linspace(0.0, 1.0, num_points)
    a = 6.0 * np.exp(-2.0 * s) * (1.0 - s**30)
    b = 0.3 + 5.7 * s
    a[-1] = 0.0
    return Schedule(s=s, a_ghz=a, b_ghz=b)
