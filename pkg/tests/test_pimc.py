import numpy as np
import pytest
from scipy.linalg import eigh

import annealer_lab.pimc as pimc_mod
from annealer_lab.model import Instance, build_probe, thermal_energy_ghz
from annealer_lab.pimc import (
    MAJORITY_VOTE,
    PimcParams,
    pimcqa_run,
    sample_fixed_point,
    slice_coupling,
    worldline_action,
)

from conftest import dense_hamiltonian


def two_qubit_instance():
    return Instance(num_qubits=2, fields={0: 0.35, 1: -0.2}, couplings={(0, 1): 0.5})


def thermal_diagonal(instance, a_ghz, b_ghz, temperature_mk):
    """diag(exp(-beta H))/Z from dense diagonalisation (independent oracle)."""
    ham = dense_hamiltonian(instance, a_ghz, b_ghz)
    beta = 1.0 / thermal_energy_ghz(temperature_mk)
    evals, evecs = eigh(ham)
    weights = np.exp(-beta * (evals - evals.min()))
    probs = (np.abs(evecs) ** 2) @ weights
    return probs / probs.sum()


def spins_to_index(spins):
    """Basis index with bit mu = 0 for spin +1 (package convention)."""
    bits = (1 - spins.astype(int)) // 2
    return (bits * (1 << np.arange(spins.shape[-1]))).sum(axis=-1)


def empirical_diagonal(samples, n):
    idx = spins_to_index(samples)
    counts = np.bincount(idx, minlength=1 << n)
    return counts / counts.sum()


class TestAction:
    def test_single_site_delta_matches_action_difference(self):
        rng = np.random.default_rng(0)
        inst = two_qubit_instance()
        a, b, t_mk = 0.9, 1.1, 20.0
        beta = 1.0 / thermal_energy_ghz(t_mk)
        slices = 4
        k = slice_coupling(a, beta, slices)
        b_coef = beta * b / slices
        for _ in range(30):
            world = rng.choice([-1.0, 1.0], size=(slices, 2))
            m = int(rng.integers(slices))
            q = int(rng.integers(2))
            s_before = worldline_action(inst, world, a, b, t_mk)
            h = inst.field_array()
            nbr_val = world[m, 1 - q]
            f_q = h[q] + 0.5 * nbr_val
            time_neigh = world[(m - 1) % slices, q] + world[(m + 1) % slices, q]
            delta_code = 2.0 * b_coef * world[m, q] * f_q + 2.0 * k * world[m, q] * time_neigh
            world[m, q] *= -1
            s_after = worldline_action(inst, world, a, b, t_mk)
            assert delta_code == pytest.approx(s_after - s_before, abs=1e-10)

    def test_detailed_balance_two_slice_configs(self):
        # pi(x) P(x->y) == pi(y) P(y->x) for single-site Metropolis moves
        inst = two_qubit_instance()
        a, b, t_mk = 1.2, 0.8, 25.0
        for x_bits in range(16):
            world_x = np.array(
                [[1.0 if x_bits & (1 << (2 * m + q)) == 0 else -1.0 for q in range(2)] for m in range(2)]
            )
            for m in range(2):
                for q in range(2):
                    world_y = world_x.copy()
                    world_y[m, q] *= -1
                    s_x = worldline_action(inst, world_x, a, b, t_mk)
                    s_y = worldline_action(inst, world_y, a, b, t_mk)
                    p_xy = min(1.0, np.exp(s_x - s_y))
                    p_yx = min(1.0, np.exp(s_y - s_x))
                    lhs = np.exp(-s_x) * p_xy
                    rhs = np.exp(-s_y) * p_yx
                    assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_slice_coupling_limits(self):
        beta = 2.0
        assert slice_coupling(1e-20, beta, 64) == pimc_mod._K_CAP
        # strong transverse field decouples slices
        assert slice_coupling(500.0, beta, 4) < 1e-100 or slice_coupling(500.0, beta, 4) >= 0


class TestEquilibrium:
    @pytest.mark.slow
    def test_two_qubit_thermal_oracle_m64(self):
        inst = two_qubit_instance()
        a_ghz, b_ghz, t_mk = 1.0, 1.0, 20.0
        params = PimcParams(trotter_slices=64, temperature_mk=t_mk, sweeps=400, replicas=8000, seed=5)
        samples = sample_fixed_point(inst, a_ghz, b_ghz, params)
        emp = empirical_diagonal(samples, 2)
        exact = thermal_diagonal(inst, a_ghz, b_ghz, t_mk)
        tv = 0.5 * np.abs(emp - exact).sum()
        assert tv < 0.02

    @pytest.mark.slow
    def test_trotter_convergence_in_m(self):
        inst = two_qubit_instance()
        a_ghz, b_ghz, t_mk = 2.0, 1.0, 20.0
        exact = thermal_diagonal(inst, a_ghz, b_ghz, t_mk)
        tvs = []
        for m in (8, 16, 32, 64):
            params = PimcParams(trotter_slices=m, temperature_mk=t_mk, sweeps=300, replicas=6000, seed=7)
            emp = empirical_diagonal(sample_fixed_point(inst, a_ghz, b_ghz, params), 2)
            tvs.append(0.5 * np.abs(emp - exact).sum())
        noise = 0.012
        assert tvs[0] > tvs[-1]  # overall convergence
        for prev, nxt in zip(tvs, tvs[1:]):
            assert nxt <= prev + noise  # monotone within sampling noise

    def test_classical_limit_matches_boltzmann(self):
        # A ~ 0 locks the worldlines: dynamics reduce to classical Metropolis,
        # whose equilibrium is the diagonal Boltzmann distribution
        inst = two_qubit_instance()
        b_ghz, t_mk = 1.0, 25.0
        params = PimcParams(trotter_slices=16, temperature_mk=t_mk, sweeps=300, replicas=6000, seed=9)
        samples = sample_fixed_point(inst, 1e-14, b_ghz, params)
        emp = empirical_diagonal(samples, 2)
        exact = thermal_diagonal(inst, 1e-14, b_ghz, t_mk)
        assert 0.5 * np.abs(emp - exact).sum() < 0.025


class TestRuns:
    def test_determinism_and_chunking(self, shipped_schedule, monkeypatch):
        inst = build_probe(0.44)
        params = PimcParams(trotter_slices=16, temperature_mk=25.0, sweeps=60, replicas=70, seed=3)
        r1 = pimcqa_run(inst, shipped_schedule, params)
        r2 = pimcqa_run(inst, shipped_schedule, params)
        assert r1.to_json() == r2.to_json()
        monkeypatch.setattr(pimc_mod, "_REPLICA_CHUNK", 16)
        r3 = pimcqa_run(inst, shipped_schedule, params)
        assert r1.to_json() == r3.to_json()

    def test_engine_tag(self, shipped_schedule):
        inst = build_probe(0.44)
        params = PimcParams(trotter_slices=8, temperature_mk=25.0, sweeps=30, replicas=20, seed=1)
        assert pimcqa_run(inst, shipped_schedule, params).engine == "pimc-qa"

    def test_majority_readout(self, shipped_schedule):
        inst = build_probe(0.44)
        params = PimcParams(
            trotter_slices=8, temperature_mk=25.0, sweeps=30, replicas=20, seed=1, readout=MAJORITY_VOTE
        )
        result = pimcqa_run(inst, shipped_schedule, params)
        assert 0 <= result.successes <= 20

    def test_param_validation(self):
        with pytest.raises(ValueError):
            PimcParams(trotter_slices=1)
        with pytest.raises(ValueError):
            PimcParams(temperature_mk=0)
        with pytest.raises(ValueError):
            PimcParams(readout="first_slice")
