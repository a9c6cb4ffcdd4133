"""Environment model and dissipative two-level dynamics along the anneal.

Unit conventions: public frequencies are nu = omega/2pi in GHz; internal rate
math runs in nanoseconds and rad/ns (1 rad/ns = 1e9 rad/s), with hbar = 1 so
the spectral density carries 1/time units.  Returned rates are in 1/s.

The hybrid noise model splits into an Ohmic high-frequency part (spectral
density below) and a low-frequency part that enters only through the measured
linewidth W and the reorganisation energy eps_p = hbar W^2 / (2 kB T) inside
the tunneling-rate integral.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .model import thermal_energy_ghz
from .spectrum import GapProfile

THERMALIZED = "thermalized"
SLOWDOWN = "slowdown"
FROZEN = "frozen"

_EXP_CUT = 37.0  # exp(-37) ~ 8.5e-17, below double-precision relevance


class QuadratureError(RuntimeError):
    """Rate integral did not converge; diagnostics in the message."""


class PointerRegimeAdvisory(UserWarning):
    """Minimum gap below the noise linewidth: adiabatic two-level rates are
    qualitative there (pointer-state regime, not simulated)."""


class GoldenRuleValidityWarning(UserWarning):
    """Golden rule evaluated outside its omega >> W validity domain."""


@dataclass(frozen=True)
class NoiseParams:
    """Measured environment parameters; eps_p always derives from (W, T)."""

    w_ghz: float = 0.40  # linewidth W/2pi
    eta: float = 0.24
    tau_c_s: float = 1e-12
    temperature_mk: float = 15.5

    def __post_init__(self):
        if self.w_ghz <= 0:
            raise ValueError("linewidth W must be positive")
        if self.eta < 0:
            raise ValueError("Ohmic coupling eta must be non-negative")
        if self.tau_c_s <= 0:
            raise ValueError("Ohmic cutoff time must be positive")
        if self.temperature_mk <= 0:
            raise ValueError("temperature must be positive")

    @property
    def w_angular(self) -> float:
        """W in rad/ns."""
        return 2.0 * np.pi * self.w_ghz

    @property
    def beta_ns(self) -> float:
        """hbar / kB T in ns."""
        return 1.0 / (2.0 * np.pi * thermal_energy_ghz(self.temperature_mk))

    @property
    def tau_c_ns(self) -> float:
        return self.tau_c_s * 1e9

    @property
    def epsilon_p_angular(self) -> float:
        """Reorganisation energy hbar W^2 / (2 kB T) in rad/ns."""
        return self.w_angular**2 * self.beta_ns / 2.0

    @property
    def epsilon_p_ghz(self) -> float:
        return self.epsilon_p_angular / (2.0 * np.pi)


def spectral_density(params: NoiseParams, omega) -> np.ndarray | float:
    """Ohmic part S_oh(omega) = eta*omega*exp(-omega*tau_c)/(1 - e^(-hw/kT)).

    ``omega`` is angular in rad/ns; the result is in rad/ns (hbar = 1), so
    a_elem * S is directly a rate in 1/ns.  The omega -> 0 limit is the
    analytic value eta * kB T / hbar.
    """
    omega = np.asarray(omega, dtype=float)
    x = omega * params.beta_ns
    small = np.abs(x) < 1e-8
    with np.errstate(over="ignore"):
        denom = -np.expm1(-x)
        body = np.where(small, 1.0 / params.beta_ns, omega / np.where(small, 1.0, denom))
    out = params.eta * body * np.exp(-omega * params.tau_c_ns)
    return float(out) if out.ndim == 0 else out


def golden_rule_rate(a_elem: float, omega10_ghz: float, params: NoiseParams) -> float:
    """First-order rate a(s) * S(Omega_10) / hbar^2 in 1/s.

    Valid for gaps well above the linewidth; a warning is emitted outside
    that domain.
    """
    omega = 2.0 * np.pi * omega10_ghz
    if abs(omega10_ghz) < params.w_ghz:
        warnings.warn(
            f"golden rule at |omega10|={abs(omega10_ghz):.3g} GHz < W={params.w_ghz:.3g} GHz",
            GoldenRuleValidityWarning,
            stacklevel=2,
        )
    return float(a_elem * spectral_density(params, omega) * 1e9)


def _logsinh(z: np.ndarray) -> np.ndarray:
    """log(sinh(z)) on the principal branch, overflow-safe.

    Assumes Im(z) < 0 (the integration path runs below the poles), which
    fixes the branch of the Re(z) < 0 reflection to -i*pi.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    neg = z.real < 0
    zp = np.where(neg, -z, z)
    big = zp.real > 30.0
    safe = np.where(big, 1.0, zp)  # keep sinh off the overflow range
    out = np.where(big, zp - np.log(2.0) + np.log1p(-np.exp(-2.0 * zp)), np.log(np.sinh(safe)))
    return np.where(neg, out - 1j * np.pi, out)


def _gaussian_factor_log(tau, omega, hamming, eps_p, w_ang):
    return 1j * (omega - hamming * eps_p) * tau - hamming * w_ang**2 * tau**2 / 2.0


def _kernel_log(tau, kappa, beta, tau_c):
    z = np.pi * (tau - 1j * tau_c) / beta
    log_g = np.log(np.pi * tau_c / beta) - 1j * np.pi / 2.0 - _logsinh(z)
    return kappa * log_g


def _cexpm1(x: np.ndarray) -> np.ndarray:
    """exp(x) - 1 for complex x without cancellation at small |x|."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 0.0, x)
    series = x * (1.0 + x / 2.0 * (1.0 + x / 3.0))
    return np.where(small, series, np.exp(safe) - 1.0)


def _niba_grid(tau_max: float, f_max: float, beta: float, tau_c: float, density: int) -> np.ndarray:
    """Positive-tau nodes: geometric near the origin, uniform beyond."""
    step = np.pi / (20.0 * f_max * density)
    t_break = min(5.0 * beta, tau_max)
    n_geo = 200 * density
    geo = np.geomspace(min(tau_c / 50.0, t_break / 1e4), t_break, n_geo)
    nodes = [np.array([0.0]), geo]
    if tau_max > t_break:
        n_uni = int(np.ceil((tau_max - t_break) / step))
        nodes.append(np.linspace(t_break, tau_max, max(n_uni, 50) + 1)[1:])
    return np.concatenate(nodes)


def niba_rate(
    omega10_ghz: float,
    hamming: float,
    a_elem: float,
    params: NoiseParams,
    quad_rtol: float = 1e-5,
) -> float:
    """Non-perturbative tunneling rate of the upper level in 1/s.

    Evaluates the environment-dressed line integral: a Gaussian factor with
    width and shift rescaled by the barrier width (Hamming distance), times
    the Ohmic csch kernel raised to hamming*eta/(2*pi), times the barrier
    permeability prefactor a(s)*Omega^2/hamming (constant in time).  The
    Gaussian envelope exp(-hamming*(W*tau)^2/2) guarantees absolute
    convergence.

    For eta > 0 the kernel-free Gaussian part is integrated analytically and
    only the remainder (kernel^kappa - 1) is quadratured, which keeps the
    oscillatory cancellation well-conditioned down to the weak-coupling
    limit; for eta = 0 the full integrand is quadratured directly so the
    closed Gaussian form stays an independent oracle.  Nodes resolve both
    the oscillation and the short-time kernel structure, with a
    doubled-density convergence check.
    """
    if hamming <= 0:
        raise ValueError("hamming must be positive for the tunneling rate")
    omega = 2.0 * np.pi * omega10_ghz
    w_ang = params.w_angular
    beta = params.beta_ns
    tau_c = params.tau_c_ns
    eps_p = params.epsilon_p_angular
    kappa = hamming * params.eta / (2.0 * np.pi)
    d_pref = a_elem * omega**2 / hamming  # 1/ns^2

    tau_max = np.sqrt(2.0 * _EXP_CUT / hamming) / w_ang
    f_max = abs(omega) + hamming * eps_p + np.sqrt(2.0 * _EXP_CUT * hamming) * w_ang + np.pi / beta

    w2 = hamming * w_ang**2
    detune = omega - hamming * eps_p
    gauss_part = np.sqrt(2.0 * np.pi / w2) * np.exp(-(detune**2) / (2.0 * w2))

    def evaluate(density: int) -> tuple[complex, float]:
        pos = _niba_grid(tau_max, f_max, beta, tau_c, density)
        tau = np.concatenate([-pos[::-1], pos[1:]])
        envelope = np.exp(_gaussian_factor_log(tau, omega, hamming, eps_p, w_ang))
        if kappa > 0.0:
            f = envelope * _cexpm1(_kernel_log(tau, kappa, beta, tau_c))
        else:
            f = envelope
        return complex(simpson(f, x=tau)), float(simpson(np.abs(f), x=tau))

    val, abs_int = evaluate(1)
    last_change = np.inf
    converged = False
    for density in (2, 4, 8, 16):
        finer, abs_int = evaluate(density)
        scale = max(abs(finer), gauss_part, 1e-300)
        last_change = abs(finer - val) / scale
        val = finer
        if last_change < quad_rtol:
            converged = True
            break
    if not converged:
        raise QuadratureError(
            f"rate integral unresolved: omega10={omega10_ghz} GHz, hamming={hamming}, "
            f"kappa={kappa:.4f}, tau_max={tau_max:.3g} ns, last change {last_change:.2e}"
        )

    # Conjugate symmetry of the integrand makes the full-line integral real;
    # a wrong branch in the kernel shows up here far above the roundoff floor.
    noise_floor = 1e-12 * abs_int
    if abs(val.imag) > max(1e-6 * abs(val.real), noise_floor):
        raise QuadratureError(
            f"imaginary residue {val.imag:.3e} vs real {val.real:.3e} "
            f"(symmetry check failed) at omega10={omega10_ghz} GHz"
        )
    total = val.real + (gauss_part if kappa > 0.0 else 0.0)
    return float(d_pref * total * 1e9)


def gaussian_mrt_rate(omega10_ghz: float, hamming: float, a_elem: float, params: NoiseParams) -> float:
    """Closed form of the eta = 0 rate: the resonant-tunneling Gaussian line
    with linewidth and shift rescaled by the barrier width.  Oracle for the
    quadrature."""
    if hamming <= 0:
        raise ValueError("hamming must be positive")
    omega = 2.0 * np.pi * omega10_ghz
    w2 = hamming * params.w_angular**2
    detune = omega - hamming * params.epsilon_p_angular
    d_pref = a_elem * omega**2 / hamming
    return float(d_pref * np.sqrt(2.0 * np.pi / w2) * np.exp(-(detune**2) / (2.0 * w2)) * 1e9)


@dataclass(frozen=True)
class RatePoint:
    """Downward/upward transition rates at one annealing point."""

    s: float
    gamma_down: float  # 1/s
    gamma_up: float
    regime: str | None = None

    def __post_init__(self):
        if self.gamma_down < 0 or self.gamma_up < 0:
            raise ValueError("rates must be non-negative")


def detailed_balance_up(gamma_down: float, omega10_ghz: float, temperature_mk: float) -> float:
    return gamma_down * float(np.exp(-omega10_ghz / thermal_energy_ghz(temperature_mk)))


def compute_rates(
    profile: GapProfile,
    params: NoiseParams,
    rate_kind: str = "niba",
    niba_hamming_floor: float = 0.5,
) -> list[RatePoint]:
    """Gamma_1->0 and detailed-balanced Gamma_0->1 along the profile.

    kind "golden_rule" uses the perturbative rate everywhere; kind "niba"
    uses the dressed-line integral where the barrier width is established
    (hamming >= niba_hamming_floor) and the golden rule in the early gapped
    stage where the integral degenerates.
    """
    if rate_kind not in ("golden_rule", "niba"):
        raise ValueError(f"unknown rate kind {rate_kind!r}")
    points = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GoldenRuleValidityWarning)
        for i in range(len(profile.s)):
            omega = float(profile.omega10_ghz[i])
            a_elem = float(profile.a_elem[i])
            hamming = float(profile.hamming[i])
            if rate_kind == "niba" and hamming >= niba_hamming_floor:
                down = niba_rate(omega, hamming, a_elem, params)
            else:
                down = golden_rule_rate(a_elem, omega, params)
            down = max(down, 0.0)
            up = detailed_balance_up(down, omega, params.temperature_mk)
            points.append(RatePoint(s=float(profile.s[i]), gamma_down=down, gamma_up=up))
    return points


@dataclass
class PopulationTrace:
    """Ground/excited populations along the anneal plus the equilibrium line."""

    s: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    p0_equilibrium: np.ndarray

    @property
    def final_p0(self) -> float:
        return float(self.p0[-1])

    def to_csv(self) -> str:
        lines = ["s,p0,p1,p0_eq"]
        for i in range(len(self.s)):
            lines.append(
                f"{self.s[i]:.10g},{self.p0[i]:.12g},{self.p1[i]:.12g},{self.p0_equilibrium[i]:.12g}"
            )
        return "\n".join(lines) + "\n"


def rates_to_csv(points: list[RatePoint]) -> str:
    lines = ["s,gamma_down,gamma_up,regime"]
    for p in points:
        lines.append(f"{p.s:.10g},{p.gamma_down:.12g},{p.gamma_up:.12g},{p.regime or ''}")
    return "\n".join(lines) + "\n"


def equilibrium_p0(omega10_ghz: np.ndarray, temperature_mk: float) -> np.ndarray:
    x = np.asarray(omega10_ghz) / thermal_energy_ghz(temperature_mk)
    return 1.0 / (1.0 + np.exp(-x))


def evolve_populations(
    profile: GapProfile,
    params: NoiseParams,
    t_qa_s: float,
    rate_kind: str = "niba",
    rate_points: list[RatePoint] | None = None,
) -> PopulationTrace:
    """Integrate dp1/dt = -G_down p1 + G_up p0 with t = s * t_qa.

    Piecewise-exponential stepping toward the local equilibrium is exact for
    constant rates and unconditionally stable, which matters because the
    rates span many orders of magnitude.  Starts from thermal equilibrium at
    the first grid point.
    """
    s = np.asarray(profile.s, dtype=float)
    if s[0] > 1e-9 or s[-1] < 1.0 - 1e-9:
        raise ValueError("profile must cover s in [0, 1]")
    if np.any(np.diff(s) <= 0):
        raise ValueError("profile grid must be strictly increasing")
    if t_qa_s <= 0:
        raise ValueError("annealing time must be positive")

    w_min_idx = int(np.argmin(profile.omega10_ghz))
    if profile.omega10_ghz[w_min_idx] < params.w_ghz:
        warnings.warn(
            f"minimum gap {profile.omega10_ghz[w_min_idx]:.3g} GHz below linewidth "
            f"W={params.w_ghz:.3g} GHz: pointer-state regime, two-level rates are qualitative",
            PointerRegimeAdvisory,
            stacklevel=2,
        )

    pts = rate_points if rate_points is not None else compute_rates(profile, params, rate_kind)
    if len(pts) != len(s):
        raise ValueError("rate points must align with the profile grid")
    gd = np.array([p.gamma_down for p in pts])
    gu = np.array([p.gamma_up for p in pts])
    if np.any(gd < 0) or np.any(gu < 0):
        raise ValueError("negative rates")

    p0_eq = equilibrium_p0(profile.omega10_ghz, params.temperature_mk)
    p1 = 1.0 - p0_eq[0]
    p0_out = np.empty(len(s))
    p1_out = np.empty(len(s))
    p0_out[0], p1_out[0] = 1.0 - p1, p1
    for i in range(len(s) - 1):
        dt = (s[i + 1] - s[i]) * t_qa_s
        total_mid = 0.5 * (gd[i] + gd[i + 1] + gu[i] + gu[i + 1])
        total_end = gd[i + 1] + gu[i + 1]
        if total_mid > 0:
            # relax toward the endpoint equilibrium: exact in the fast limit
            if total_end > 0:
                p1_target = gu[i + 1] / total_end
            else:
                p1_target = (gu[i] + gu[i + 1]) / (2.0 * total_mid)
            p1 = p1_target + (p1 - p1_target) * np.exp(-total_mid * dt)
        p0_out[i + 1], p1_out[i + 1] = 1.0 - p1, p1
    return PopulationTrace(s=s, p0=p0_out, p1=p1_out, p0_equilibrium=p0_eq)


def classify_regimes(points: list[RatePoint], t_qa_s: float) -> tuple[list[RatePoint], list[tuple[float, str, str]]]:
    """Annotate rate points as thermalized / slowdown / frozen.

    t_qa*Gamma >= 10 is thermalized (closed upper boundary), [0.1, 10) is
    slowdown, < 0.1 is frozen.  Returns the annotated points and the s
    values where the class changes.
    """
    annotated = []
    for p in points:
        x = t_qa_s * p.gamma_down
        if x >= 10.0:
            regime = THERMALIZED
        elif x >= 0.1:
            regime = SLOWDOWN
        else:
            regime = FROZEN
        annotated.append(RatePoint(s=p.s, gamma_down=p.gamma_down, gamma_up=p.gamma_up, regime=regime))
    boundaries = []
    for prev, cur in zip(annotated, annotated[1:]):
        if cur.regime != prev.regime:
            boundaries.append((cur.s, prev.regime, cur.regime))
    return annotated, boundaries
