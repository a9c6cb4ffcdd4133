import numpy as np
import pytest

from annealer_lab.model import (
    BRUTE_FORCE_MAX_QUBITS,
    DegenerateInstanceError,
    Instance,
    MotifSpec,
    PhysicalConstants,
    Schedule,
    ScheduleValidationError,
    SizeCapError,
    brute_force_ground,
    build_probe,
    cell_ground_state,
    default_schedule,
    energy,
    generate_motif_glass,
    known_ground_state,
    probe_topology,
    schedule_at,
    thermal_energy_ghz,
)


def probe_minima(n=16):
    all_down = -np.ones(n)
    false_min = np.concatenate([np.ones(n // 2), -np.ones(n // 2)])
    return all_down, false_min


class TestProbe:
    def test_structure(self):
        inst = build_probe(0.44)
        assert inst.num_qubits == 16
        assert len(inst.couplings) == 36
        assert all(v == 1.0 for v in inst.couplings.values())
        assert inst.qubits_with_label_prefix("left") == list(range(8))
        assert inst.qubits_with_label_prefix("right") == list(range(8, 16))
        # four inter-cell edges pairing corresponding qubits
        inter = [(i, j) for (i, j) in inst.couplings if i < 8 <= j]
        assert inter == [(4 + k, 8 + k) for k in range(4)]

    def test_hand_energies(self):
        inst = build_probe(0.44)
        all_down, false_min = probe_minima()
        # -(8*0.44*(-1) + 8*(-1)*(-1)) - 36 = -4.48 - 36
        assert energy(inst, all_down) == pytest.approx(-40.48, abs=1e-12)
        # -(8*0.44 + 8) - (32 - 4) = -11.52 - 28
        assert energy(inst, false_min) == pytest.approx(-39.52, abs=1e-12)
        assert energy(inst, all_down) - energy(inst, false_min) == pytest.approx(-0.96, abs=1e-12)

    @pytest.mark.parametrize("h_l", [0.25, 0.40, 0.44, 0.48])
    def test_residual_energy_formula(self, h_l):
        inst = build_probe(h_l)
        all_down, false_min = probe_minima()
        gap = energy(inst, false_min) - energy(inst, all_down)
        assert gap == pytest.approx(8 * (1 - 2 * h_l), abs=1e-12)

    def test_probe_025_gap_is_4(self):
        inst = build_probe(0.25)
        all_down, false_min = probe_minima()
        assert energy(inst, false_min) - energy(inst, all_down) == pytest.approx(4.0, abs=1e-12)

    def test_degenerate_and_invalid_inputs(self):
        with pytest.raises(DegenerateInstanceError):
            build_probe(0.5)
        with pytest.raises(DegenerateInstanceError):
            build_probe(0.6)
        with pytest.raises(ValueError):
            build_probe(0.44, j=0.0)
        with pytest.raises(ValueError):
            build_probe(0.44, j=-1.0)
        with pytest.raises(ValueError):
            build_probe(-0.1)


class TestEnergy:
    def test_zero_instance(self):
        inst = Instance(num_qubits=3, fields={0: 0.0, 1: 0.0, 2: 0.0}, couplings={})
        assert energy(inst, np.array([1, -1, 1])) == 0.0

    def test_length_mismatch(self):
        inst = build_probe(0.44)
        with pytest.raises(ValueError):
            energy(inst, np.ones(15))

    def test_global_spin_flip_gauge(self):
        rng = np.random.default_rng(3)
        inst = build_probe(0.44)
        flipped = Instance(
            num_qubits=inst.num_qubits,
            fields={q: -h for q, h in inst.fields.items()},
            couplings=dict(inst.couplings),
            cluster_label=dict(inst.cluster_label),
        )
        for _ in range(20):
            spins = rng.choice([-1.0, 1.0], size=16)
            assert energy(inst, spins) == pytest.approx(energy(flipped, -spins), abs=1e-12)

    def test_single_qubit_sign_convention(self):
        inst = Instance(num_qubits=1, fields={0: 1.0}, couplings={})
        assert energy(inst, np.array([1.0])) == -1.0
        spins, e, _ = brute_force_ground(inst)
        assert spins[0] == 1.0 and e == -1.0


class TestBruteForce:
    def test_probe_global_minimum(self):
        inst = build_probe(0.44)
        spins, e, deg = brute_force_ground(inst)
        assert np.all(spins == -1.0)
        assert e == pytest.approx(-40.48, abs=1e-12)
        assert deg == 1

    @pytest.mark.parametrize("h_l", [0.05, 0.25, 0.44, 0.49])
    def test_clusters_follow_strong_field(self, h_l):
        spins, _, _ = brute_force_ground(build_probe(h_l))
        assert np.all(spins == -1.0)

    def test_degenerate_boundary(self):
        inst = probe_topology(0.5, -1.0, 1.0)  # bypasses the builder guard
        _, _, deg = brute_force_ground(inst)
        assert deg == 2

    def test_size_cap(self):
        n = BRUTE_FORCE_MAX_QUBITS + 1
        inst = Instance(num_qubits=n, fields={q: 0.1 for q in range(n)}, couplings={})
        with pytest.raises(SizeCapError):
            brute_force_ground(inst)


class TestMotifGlass:
    def test_single_motif_reduces_to_probe(self):
        glass = generate_motif_glass(MotifSpec(n_black_cells=1, n_grey_cells=1, glass_seed=5))
        probe = build_probe(0.44)
        assert glass.num_qubits == probe.num_qubits
        assert glass.fields == probe.fields
        assert glass.couplings == probe.couplings

    def test_determinism(self):
        spec = MotifSpec(n_black_cells=4, n_grey_cells=3, glass_seed=7)
        a = generate_motif_glass(spec).to_json()
        b = generate_motif_glass(spec).to_json()
        assert a == b

    def test_seed_changes_signs(self):
        spec1 = MotifSpec(n_black_cells=4, n_grey_cells=0, glass_seed=1)
        spec2 = MotifSpec(n_black_cells=4, n_grey_cells=0, glass_seed=2)
        assert generate_motif_glass(spec1).to_json() != generate_motif_glass(spec2).to_json()

    def test_200_qubit_layout(self):
        glass = generate_motif_glass(MotifSpec(n_black_cells=13, n_grey_cells=12, glass_seed=7))
        assert glass.num_qubits == 200
        labels = set(glass.cluster_label.values())
        assert len(labels) == 25
        assert sum(1 for l in labels if l.startswith("black")) == 13
        assert sum(1 for l in labels if l.startswith("grey")) == 12

    def test_grey_bundles_ferromagnetic(self):
        glass = generate_motif_glass(MotifSpec(n_black_cells=4, n_grey_cells=4, glass_seed=3))
        greys = {q for q in range(glass.num_qubits) if glass.cluster_label[q].startswith("grey")}
        for (i, j), v in glass.couplings.items():
            if (i in greys) != (j in greys):
                assert v == 1.0

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            MotifSpec(n_black_cells=0, n_grey_cells=0)
        with pytest.raises(ValueError):
            MotifSpec(n_black_cells=2, n_grey_cells=3)
        with pytest.raises(ValueError):
            MotifSpec(n_black_cells=5, n_grey_cells=0, layout=(2, 2))


class TestGroundStateOracles:
    def test_cell_oracle_matches_brute_force_16(self):
        glass = generate_motif_glass(MotifSpec(n_black_cells=2, n_grey_cells=0, glass_seed=11))
        spins_bf, e_bf, _ = brute_force_ground(glass)
        spins_cell, e_cell = cell_ground_state(glass)
        assert e_cell == pytest.approx(e_bf, abs=1e-9)
        assert energy(glass, spins_cell) == pytest.approx(e_bf, abs=1e-9)

    @pytest.mark.slow
    def test_cell_oracle_matches_brute_force_24(self):
        glass = generate_motif_glass(MotifSpec(n_black_cells=2, n_grey_cells=1, glass_seed=13))
        assert glass.num_qubits == 24
        _, e_bf, _ = brute_force_ground(glass)
        _, e_cell = cell_ground_state(glass)
        assert e_cell == pytest.approx(e_bf, abs=1e-9)

    def test_known_ground_state_dispatch(self):
        probe = build_probe(0.44)
        spins, e = known_ground_state(probe)
        assert e == pytest.approx(-40.48, abs=1e-12)
        glass = generate_motif_glass(MotifSpec(n_black_cells=4, n_grey_cells=3, glass_seed=5))
        spins, e = known_ground_state(glass)
        assert energy(glass, spins) == pytest.approx(e, abs=1e-9)


class TestSchedule:
    def test_default_schedule_endpoints(self):
        sched = default_schedule()
        a0, b0 = schedule_at(sched, 0.0)
        a1, b1 = schedule_at(sched, 1.0)
        assert a0 == pytest.approx(6.0)
        assert a0 / b0 >= 10
        assert a1 == 0.0
        assert b1 == pytest.approx(6.0)

    def test_midpoint_interpolation(self):
        sched = Schedule(s=np.array([0, 0.5, 1.0]), a_ghz=np.array([6.0, 2.0, 0.0]), b_ghz=np.array([0.3, 3.0, 6.0]))
        a, b = schedule_at(sched, 0.25)
        assert a == pytest.approx((6.0 + 2.0) / 2)
        assert b == pytest.approx((0.3 + 3.0) / 2)

    def test_out_of_range(self):
        sched = default_schedule()
        with pytest.raises(ValueError):
            schedule_at(sched, -0.01)
        with pytest.raises(ValueError):
            schedule_at(sched, 1.01)

    def test_validation_errors(self):
        with pytest.raises(ScheduleValidationError):  # A increasing
            Schedule(s=np.array([0, 1.0]), a_ghz=np.array([1.0, 2.0]), b_ghz=np.array([0.1, 1.0]))
        with pytest.raises(ScheduleValidationError):  # B decreasing
            Schedule(s=np.array([0, 1.0]), a_ghz=np.array([6.0, 0.0]), b_ghz=np.array([1.0, 0.5]))
        with pytest.raises(ScheduleValidationError):  # A(1) nonzero
            Schedule(s=np.array([0, 1.0]), a_ghz=np.array([6.0, 1.0]), b_ghz=np.array([0.3, 6.0]))
        with pytest.raises(ScheduleValidationError):  # weak initial dominance
            Schedule(s=np.array([0, 1.0]), a_ghz=np.array([6.0, 0.0]), b_ghz=np.array([1.0, 6.0]))
        with pytest.raises(ScheduleValidationError):  # s not increasing
            Schedule(s=np.array([0, 0.5, 0.5, 1.0]), a_ghz=np.array([6, 4, 3, 0.0]), b_ghz=np.array([0.3, 1, 2, 6.0]))

    def test_csv_round_trip(self):
        sched = default_schedule(101)
        again = Schedule.from_csv(sched.to_csv())
        assert np.allclose(again.s, sched.s)
        assert np.allclose(again.a_ghz, sched.a_ghz)
        assert np.allclose(again.b_ghz, sched.b_ghz)


class TestInstanceIO:
    def test_json_round_trip(self):
        inst = generate_motif_glass(MotifSpec(n_black_cells=3, n_grey_cells=2, glass_seed=9))
        again = Instance.from_json(inst.to_json())
        assert again == inst
        assert again.content_hash() == inst.content_hash()

    def test_invalid_instances(self):
        with pytest.raises(ValueError):
            Instance(num_qubits=2, fields={0: 1.0}, couplings={})
        with pytest.raises(ValueError):
            Instance(num_qubits=2, fields={0: 1.0, 1: 1.0}, couplings={(0, 0): 1.0})
        with pytest.raises(ValueError):
            Instance(num_qubits=2, fields={0: 1.0, 1: 1.0}, couplings={(1, 0): 1.0})


class TestConstants:
    def test_temperature_conversion(self):
        assert thermal_energy_ghz(15.5) == pytest.approx(0.323, rel=2e-3)

    def test_annealing_time_guard(self):
        with pytest.raises(ValueError):
            PhysicalConstants(t_qa_us=0.0)
        assert PhysicalConstants(t_qa_us=20.0).t_qa_seconds == pytest.approx(2e-5)
