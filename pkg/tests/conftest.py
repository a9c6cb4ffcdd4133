import numpy as np
import pytest

from annealer_lab.model import Schedule


def schedule_hitting(a_ghz: float, b_ghz: float, s: float = 0.5) -> Schedule:
    """Valid schedule passing through (a_ghz, b_ghz) at the given s."""
    if not (0 < s < 1):
        raise ValueError("interior s required")
    b0 = min(b_ghz, 0.05)
    a0 = max(a_ghz, 10.5 * b0, 1.0)
    return Schedule(
        s=np.array([0.0, s, 1.0]),
        a_ghz=np.array([a0, a_ghz, 0.0]),
        b_ghz=np.array([b0, b_ghz, max(b_ghz, 1.0)]),
    )


def dense_hamiltonian(instance, a_ghz: float, b_ghz: float) -> np.ndarray:
    """Independent dense construction from Pauli Kronecker products.

    Qubit 0 is the least significant bit; sigma^z = diag(+1, -1) so bit 0
    means spin +1, matching the package basis convention.
    """
    n = instance.num_qubits
    eye = np.eye(2)
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])

    def op_on(qubit: int, op: np.ndarray) -> np.ndarray:
        m = np.eye(1)
        for q in reversed(range(n)):
            m = np.kron(m, op if q == qubit else eye)
        return m

    ham = np.zeros((1 << n, 1 << n))
    for q, h in instance.fields.items():
        ham -= b_ghz * h * op_on(q, sz)
    for (i, j), v in instance.couplings.items():
        ham -= b_ghz * v * (op_on(i, sz) @ op_on(j, sz))
    for q in range(n):
        ham -= a_ghz * op_on(q, sx)
    return ham


@pytest.fixture(scope="session")
def shipped_schedule():
    from annealer_lab.model import default_schedule

    return default_schedule()
