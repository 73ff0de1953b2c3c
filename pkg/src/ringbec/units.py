"""Conversions between laboratory (SI) parameters and trap units.

Lengths are measured in sigma = sqrt(hbar/(m*omega)), energies in
hbar*omega and times in 1/omega. The dimensionless interaction strength is
g2d = N * a_s * sqrt(8*pi*m*omega_z/hbar).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

HBAR = 1.054571817e-34  # J*s, CODATA 2018


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory description of the condensate and trap."""

    atom_count: int
    atom_mass: float          # kg
    scattering_length: float  # m
    radial_trap_freq: float   # rad/s
    axial_trap_freq: float    # rad/s
    coherence_time: float | None = None  # s

    def __post_init__(self):
        if self.atom_count < 1:
            raise ParameterError("atom_count must be >= 1")
        if self.atom_mass <= 0:
            raise ParameterError("atom_mass must be positive")
        if self.radial_trap_freq <= 0 or self.axial_trap_freq <= 0:
            raise ParameterError("trap frequencies must be positive")

    @property
    def sigma(self) -> float:
        """Radial oscillator length (m)."""
        return math.sqrt(HBAR / (self.atom_mass * self.radial_trap_freq))

    @property
    def a_z(self) -> float:
        """Axial oscillator length (m)."""
        return math.sqrt(HBAR / (self.atom_mass * self.axial_trap_freq))

    @property
    def aspect_ratio(self) -> float:
        return self.axial_trap_freq / self.radial_trap_freq


@dataclass(frozen=True)
class DimensionlessParams:
    """Trap-unit description used by the propagator and the reduced model."""

    ring_radius: float
    g2d: float
    external_rotation: float = 0.0
    aspect_ratio: float = 1.0

    def __post_init__(self):
        if self.ring_radius <= 0:
            raise ParameterError("ring_radius must be positive")
        if self.aspect_ratio <= 0:
            raise ParameterError("aspect_ratio must be positive")


def g2d_from_physical(p: PhysicalParams) -> float:
    """Dimensionless interaction strength from lab parameters."""
    return (
        p.atom_count
        * p.scattering_length
        * math.sqrt(8.0 * math.pi * p.atom_mass * p.axial_trap_freq / HBAR)
    )


def physical_from_g2d(g2d: float, atom_count: int, atom_mass: float,
                      axial_trap_freq: float) -> float:
    """Scattering length (m) realizing a given g2d; exact algebraic inverse."""
    if atom_count < 1 or atom_mass <= 0 or axial_trap_freq <= 0:
        raise ParameterError("invalid inversion inputs")
    return g2d / (
        atom_count * math.sqrt(8.0 * math.pi * atom_mass * axial_trap_freq / HBAR)
    )


def frequency_to_si(omega_dimless: float, radial_trap_freq: float):
    """Convert a trap-unit frequency to (rad/s, Hz)."""
    if radial_trap_freq <= 0:
        raise ParameterError("radial_trap_freq must be positive")
    rad_s = omega_dimless * radial_trap_freq
    return rad_s, rad_s / (2.0 * math.pi)


@dataclass
class ValidityCheck:
    name: str
    value: float
    threshold: float
    # comparison is "<=" (warn above) unless flip is set, then warn below
    warn_above: bool = True

    @property
    def passed(self) -> bool:
        if self.warn_above:
            return self.value <= self.threshold
        return self.value >= self.threshold


@dataclass
class ValidityReport:
    checks: list[ValidityCheck] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "WARN"
            op = "<=" if c.warn_above else ">="
            lines.append(
                f"{c.name}: {c.value:.4g} (want {op} {c.threshold:g}) [{status}]"
            )
        return "\n".join(lines)


def validity_report(
    physical: PhysicalParams | None,
    peak_density_2d: float,
    interaction_overlap: float,
    level_gap: float,
    rotation_freq: float | None = None,
    *,
    quasi2d_threshold: float = 0.1,
    weak_interaction_threshold: float = 0.25,
    observability_threshold: float = 1.0,
) -> ValidityReport:
    """Diagnostic ratios for the regimes the model assumes.

    Reports a_z*a_s*n2 (quasi-2D reduction), U/Delta (weak interaction) and
    Omega*omega*tau (rotation observable within the coherence time). The
    report never blocks computation; callers decide what to do with warnings.
    peak_density_2d is the dimensionless peak of N*|psi|^2 rescaled to
    physical units internally when lab parameters are available.
    """
    checks = []
    if physical is not None:
        # n2 in SI: peak of N*|psi|^2 has units 1/sigma^2
        n2_si = peak_density_2d / physical.sigma**2
        checks.append(
            ValidityCheck(
                "a_z*a_s*n2",
                physical.a_z * physical.scattering_length * n2_si,
                quasi2d_threshold,
            )
        )
    if level_gap > 0:
        checks.append(
            ValidityCheck(
                "U/Delta", abs(interaction_overlap) / level_gap,
                weak_interaction_threshold,
            )
        )
    if rotation_freq is not None and physical is not None and physical.coherence_time:
        checks.append(
            ValidityCheck(
                "Omega*omega*tau",
                abs(rotation_freq) * physical.radial_trap_freq * physical.coherence_time,
                observability_threshold,
                warn_above=False,
            )
        )
    return ValidityReport(checks)
