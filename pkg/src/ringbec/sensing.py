"""Inference layer: from measured rotation data to physical quantities.

Maps the observables delivered by the measurement protocol (rotation
frequency, population imbalance, overlap integral, level gap) to the
interaction strength, and onward to a scattering length, a magnetic field
through a Feshbach resonance, or an external rotation rate. Uncertainties
use first-order propagation from the input standard errors.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .units import HBAR


class SensingError(ValueError):
    pass


DENOMINATOR_GUARD = 1e-6


@dataclass(frozen=True)
class Measured:
    """A value with a standard error."""

    value: float
    stderr: float = 0.0

    def __post_init__(self):
        if self.stderr < 0:
            raise SensingError("standard error must be nonnegative")


def _as_measured(x) -> Measured:
    return x if isinstance(x, Measured) else Measured(float(x))


@dataclass(frozen=True)
class FeshbachParams:
    background_a: float  # m
    resonance_B: float   # T
    width: float         # T

    def __post_init__(self):
        if self.width == 0 or self.background_a == 0:
            raise SensingError("resonance width and background length must be nonzero")


@dataclass
class SensingEstimate:
    kind: str            # g2d | a_s | B | omega_ext | dB_threshold
    value: float
    standard_error: float
    inputs_digest: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.standard_error < 0:
            raise SensingError("standard_error must be nonnegative")
        if not self.inputs_digest:
            raise SensingError("inputs_digest must be non-empty")


def digest_inputs(**inputs) -> str:
    """Stable hash of the measurement inputs feeding an estimate."""
    payload = {}
    for k, v in sorted(inputs.items()):
        if isinstance(v, Measured):
            payload[k] = [v.value, v.stderr]
        else:
            payload[k] = v
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()[:16]


def infer_g2d(omega, overlap_integral, delta, imbalance) -> SensingEstimate:
    """Interaction strength g2d = (1/I) * 2*Omega / (n - 2*Omega/Delta).

    Exact algebraic inverse of the nodal-frequency formula. Errors when the
    denominator degenerates (measured rotation inconsistent with the
    weak-interaction model).
    """
    om, ii, dd, nn = map(_as_measured, (omega, overlap_integral, delta, imbalance))
    if ii.value <= 0:
        raise SensingError("overlap integral must be positive")
    den = nn.value - 2.0 * om.value / dd.value
    if abs(den) <= DENOMINATOR_GUARD:
        raise SensingError(
            f"degenerate denominator n - 2*Omega/Delta = {den:.3g}; measured "
            "rotation is inconsistent with the weak-interaction model"
        )
    g = 2.0 * om.value / (ii.value * den)
    # partial derivatives
    dg_dom = (2.0 / (ii.value * den)) * (1.0 + (2.0 * om.value / dd.value) / den)
    dg_di = -g / ii.value
    dg_dn = -g / den
    dg_dd = -g * (2.0 * om.value / dd.value**2) / den
    var = ((dg_dom * om.stderr) ** 2 + (dg_di * ii.stderr) ** 2
           + (dg_dn * nn.stderr) ** 2 + (dg_dd * dd.stderr) ** 2)
    return SensingEstimate(
        kind="g2d", value=g, standard_error=math.sqrt(var),
        inputs_digest=digest_inputs(omega=om, I=ii, delta=dd, n=nn),
        details={"denominator": den},
    )


def feshbach_a(B: float, f: FeshbachParams) -> float:
    """Scattering length a(B) = a_bg * (1 - width/(B - B0))."""
    if B == f.resonance_B:
        raise SensingError("at-resonance magnetic field: scattering length diverges")
    return f.background_a * (1.0 - f.width / (B - f.resonance_B))


def feshbach_invert(a_s, f: FeshbachParams, branch_hint=None) -> SensingEstimate:
    """Magnetic field realizing a scattering length: B = B0 + w*a_bg/(a_bg - a).

    Single-valued for one resonance; branch_hint is reserved for future
    multi-resonance data.
    """
    a = _as_measured(a_s)
    if a.value == f.background_a:
        raise SensingError("a_s equals the background value: |B| -> infinity")
    B = f.resonance_B + f.width * f.background_a / (f.background_a - a.value)
    dB_da = f.width * f.background_a / (f.background_a - a.value) ** 2
    return SensingEstimate(
        kind="B", value=B, standard_error=abs(dB_da) * a.stderr,
        inputs_digest=digest_inputs(a_s=a, a_bg=f.background_a,
                                    B0=f.resonance_B, width=f.width),
    )


def domega_dB(imbalance: float, overlap_integral: float, atom_count: int,
              atom_mass: float, axial_trap_freq: float, U: float, delta: float,
              dadB: float) -> float:
    """Magnetometer response slope dOmega/dB in trap-frequency units per tesla.

    Combines the nodal-frequency formula with the interaction-strength
    conversion: the chain n*I*N*sqrt(8*pi*m*omega_z/hbar)*(da/dB) divided by
    2*(1 + U/Delta)^2.
    """
    if delta <= 0:
        raise SensingError("delta must be positive")
    conv = atom_count * math.sqrt(8.0 * math.pi * atom_mass * axial_trap_freq / HBAR)
    return (imbalance * overlap_integral * conv * dadB
            / (2.0 * (1.0 + U / delta) ** 2))


def threshold_sensitivity(delta_omega: float, imbalance: float,
                          overlap_integral: float, atom_count: int,
                          aspect_ratio: float, sigma: float,
                          dadB: float) -> float:
    """Resolvable field change dB_th = 8*sigma*dOmega/(n*I*N*sqrt(8*pi*L)*da/dB).

    This is the threshold obtained by capping the interaction correction at
    its validity limit; sigma is the radial oscillator length in meters and
    the result is in tesla.
    """
    if dadB == 0:
        raise SensingError("dadB must be nonzero")
    if min(imbalance, overlap_integral, atom_count, aspect_ratio, sigma) <= 0:
        raise SensingError("inputs must be positive")
    return (8.0 * sigma * delta_omega
            / (imbalance * overlap_integral * atom_count
               * math.sqrt(8.0 * math.pi * aspect_ratio) * dadB))


def infer_external_rotation(omega_observed, omega_model) -> SensingEstimate:
    """External rotation rate as the shift of the observed nodal frequency
    from the interaction-only model prediction."""
    obs = _as_measured(omega_observed)
    mod = _as_measured(omega_model)
    return SensingEstimate(
        kind="omega_ext", value=obs.value - mod.value,
        standard_error=math.hypot(obs.stderr, mod.stderr),
        inputs_digest=digest_inputs(omega_observed=obs, omega_model=mod),
    )
