"""Reduced coupled-mode models for counter-rotating OAM superpositions.

Covers the four-state (l = +-1, +-3) nonlinear amplitude model, the three
linearized coherence equations, the cubic characteristic equation whose
smallest root gives the nodal-line rotation frequency, and the general
odd-l truncation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# basis ordering used throughout: [a_{1+}, a_{1-}, a_{3+}, a_{3-}]
BASIS = (1, -1, 3, -3)


class FsmError(ValueError):
    pass


@dataclass(frozen=True)
class FsmParams:
    """Constants of the reduced model: interaction overlap and level gap."""

    U: float
    mu1: float
    mu3: float

    def __post_init__(self):
        if self.delta <= 0:
            raise FsmError(f"require mu3 > mu1, got gap {self.delta}")

    @property
    def delta(self) -> float:
        return self.mu3 - self.mu1

    @property
    def weak_regime(self) -> bool:
        return abs(self.U) / self.delta < 1.0


@dataclass
class FsmState:
    amplitudes: np.ndarray  # [a1p, a1m, a3p, a3m]
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (4,):
            raise FsmError("state must have 4 amplitudes")

    @classmethod
    def from_imbalance(cls, p_plus: float, p_minus: float,
                       relative_phase: float = 0.0) -> "FsmState":
        if p_plus < 0 or p_minus < 0 or abs(p_plus + p_minus - 1.0) > 1e-10:
            raise FsmError("populations must be nonnegative and sum to 1")
        return cls(np.array([np.sqrt(p_plus),
                             np.sqrt(p_minus) * np.exp(1j * relative_phase),
                             0.0, 0.0]))

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def coherence_1p1m(self) -> complex:
        return complex(self.amplitudes[0] * np.conj(self.amplitudes[1]))


def fsm_params(profile, g2d: float, mu1: float, mu3: float) -> FsmParams:
    """U = g2d * 2*pi*int f^4 r dr from the shared radial profile."""
    r, f = profile.r, profile.f
    U = g2d * 2.0 * np.pi * np.trapezoid(f**4 * r, r)
    return FsmParams(U=float(U), mu1=float(mu1), mu3=float(mu3))


def overlap_integral(profile) -> float:
    """I = 2*pi*int f^4 r dr (so that U = g2d * I)."""
    return float(2.0 * np.pi * np.trapezoid(profile.f**4 * profile.r, profile.r))


def build_hamiltonian(state: FsmState, params: FsmParams) -> np.ndarray:
    """Four-state Hamiltonian; Hermitian for any amplitudes."""
    a1p, a1m, a3p, a3m = state.amplitudes
    r1p1m = a1p * np.conj(a1m)
    r1p3p = a1p * np.conj(a3p)
    r1m3m = a1m * np.conj(a3m)
    r1p3m = a1p * np.conj(a3m)
    r1m3p = a1m * np.conj(a3p)
    r3p3m = a3p * np.conj(a3m)
    U, mu1, mu3 = params.U, params.mu1, params.mu3
    if U == 0.0:
        return np.diag([mu1, mu1, mu3, mu3]).astype(np.complex128)
    s = r1p1m + np.conj(r1p3p) + r1m3m        # recurring off-diagonal block
    w = r1p3m + np.conj(r1m3p)
    H = np.array(
        [
            [mu1 / U, s, np.conj(s), w],
            [np.conj(s), mu1 / U, np.conj(w), s],
            [s, w, mu3 / U, r3p3m],
            [np.conj(w), np.conj(s), np.conj(r3p3m), mu3 / U],
        ],
        dtype=np.complex128,
    )
    return U * H


def _rhs(amps: np.ndarray, params: FsmParams) -> np.ndarray:
    state = FsmState(amps)
    return -1j * (build_hamiltonian(state, params) @ amps)


@dataclass
class FsmTrajectory:
    t: np.ndarray
    amplitudes: np.ndarray  # (nt, 4)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def coherence_1p1m(self) -> np.ndarray:
        return self.amplitudes[:, 0] * np.conj(self.amplitudes[:, 1])

    def norm_drift(self) -> float:
        norms = np.sum(np.abs(self.amplitudes) ** 2, axis=1)
        return float(np.max(np.abs(norms - norms[0])))


def integrate_fsm(state0: FsmState, params: FsmParams, t_final: float,
                  dt: float = 1e-3, store_stride: int = 1) -> FsmTrajectory:
    """Classical RK4 on the nonlinear four-state system.

    The Hamiltonian depends on the state, so it is rebuilt at every RK
    stage.
    """
    if dt > 1e-2:
        raise FsmError("dt too large for the default RK4 integrator (max 1e-2)")
    nsteps = int(round(t_final / dt))
    a = state0.amplitudes.copy()
    ts = [state0.time]
    out = [a.copy()]
    t = state0.time
    for s in range(1, nsteps + 1):
        k1 = _rhs(a, params)
        k2 = _rhs(a + 0.5 * dt * k1, params)
        k3 = _rhs(a + 0.5 * dt * k2, params)
        k4 = _rhs(a + dt * k3, params)
        a = a + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if s % store_stride == 0 or s == nsteps:
            ts.append(t)
            out.append(a.copy())
    return FsmTrajectory(t=np.array(ts), amplitudes=np.array(out))


@dataclass
class CoherenceTriple:
    """Slow coherences of the linearized model, populations held fixed."""

    rho_1p1m: complex
    rho_1p3p_conj: complex
    rho_1m3m: complex
    p1p: float
    p1m: float

    def vector(self) -> np.ndarray:
        return np.array([self.rho_1p1m, self.rho_1p3p_conj, self.rho_1m3m],
                        dtype=np.complex128)


def coherence_matrix(params: FsmParams, p1p: float, p1m: float) -> np.ndarray:
    """Matrix M of i d(rho)/dt = M rho for the three slow coherences."""
    U, D = params.U, params.delta
    return np.array(
        [
            [U * (p1m - p1p), U * (2 * p1m - p1p), U * (p1m - 2 * p1p)],
            [U * p1p, U * p1p + D, 2 * U * p1p],
            [-U * p1m, -2 * U * p1m, -U * p1m - D],
        ],
        dtype=np.complex128,
    )


def coherence_rhs(c: CoherenceTriple, params: FsmParams) -> np.ndarray:
    """Time derivatives (d/dt) of the coherence triple."""
    m = coherence_matrix(params, c.p1p, c.p1m)
    return -1j * (m @ c.vector())


def characteristic_roots(U: float, delta: float, p1p: float, p1m: float,
                         drop_u2_term: bool = False) -> np.ndarray:
    """Roots k of i*k^3 + i*k*(U*D + D^2 - p+*p-*U^2) + U*D^2*(p+ - p-) = 0.

    Solved as the equivalent monic cubic via companion-matrix eigenvalues
    (np.roots). Roots are sorted by modulus, smallest first; with
    drop_u2_term the p+*p-*U^2 piece is omitted (documented comparison
    mode, not the default).
    """
    if delta <= 0:
        raise FsmError("delta must be positive")
    n = p1p - p1m
    c1 = U * delta + delta**2 - (0.0 if drop_u2_term else p1p * p1m * U**2)
    c0 = -1j * U * delta**2 * n
    roots = np.roots([1.0, 0.0, c1, c0])
    if n == 0:
        # tie at equal modulus: keep the exact zero root first (no rotation)
        roots = roots[np.argsort(np.abs(roots))]
        roots[np.isclose(roots, 0.0, atol=1e-300)] = 0.0
        zero_idx = int(np.argmin(np.abs(roots)))
        order = [zero_idx] + [i for i in range(3) if i != zero_idx]
        return roots[order]
    return roots[np.argsort(np.abs(roots))]


def omega_from_root(k0: complex) -> float:
    """Nodal-line rotation frequency from the smallest characteristic root."""
    return float((-0.5j * k0).real)


def omega_fsm(U: float, delta: float, n: float) -> float:
    """Closed-form nodal-line rotation frequency U*n / (2*(1 + U/delta))."""
    if delta <= 0:
        raise FsmError("delta must be positive")
    return U * n / (2.0 * (1.0 + U / delta))


def general_rhs(amplitudes: dict, U: float, mu: dict) -> dict:
    """Equations of motion for odd-l amplitudes:
    i da_l/dt = mu_l a_l + U * sum_{m != m'} a_m conj(a_{m'}) a_{l+m'-m}.

    `amplitudes` maps signed odd l to complex amplitude; targets outside the
    truncation set are dropped. `mu` maps |l| to the chemical potential.
    """
    ls = sorted(amplitudes.keys())
    for l in ls:
        if l % 2 == 0:
            raise FsmError("truncation set must contain odd winding numbers only")
    out = {}
    for l in ls:
        acc = 0.0 + 0.0j
        for m in ls:
            am = amplitudes[m]
            for mp in ls:
                if m == mp:
                    continue
                target = l + mp - m
                if target in amplitudes:
                    acc += am * np.conj(amplitudes[mp]) * amplitudes[target]
        out[l] = -1j * (mu[abs(l)] * amplitudes[l] + U * acc)
    return out


def integrate_general(amplitudes0: dict, U: float, mu: dict, t_final: float,
                      dt: float = 1e-3, store_stride: int = 1):
    """RK4 on the general odd-l truncation; returns (t, list of dicts)."""
    ls = sorted(amplitudes0.keys())

    def rhs_vec(vec):
        amps = dict(zip(ls, vec))
        d = general_rhs(amps, U, mu)
        return np.array([d[l] for l in ls])

    a = np.array([amplitudes0[l] for l in ls], dtype=np.complex128)
    nsteps = int(round(t_final / dt))
    ts, out = [0.0], [dict(zip(ls, a))]
    for s in range(1, nsteps + 1):
        k1 = rhs_vec(a)
        k2 = rhs_vec(a + 0.5 * dt * k1)
        k3 = rhs_vec(a + 0.5 * dt * k2)
        k4 = rhs_vec(a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if s % store_stride == 0 or s == nsteps:
            ts.append(s * dt)
            out.append(dict(zip(ls, a)))
    return np.array(ts), out
