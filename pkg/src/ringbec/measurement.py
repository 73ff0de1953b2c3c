"""Density-image analysis: the virtual fluorescence measurement protocol.

Everything here consumes DensityImage objects only; the complex field never
enters, mirroring what an experiment can actually observe. From the images
we estimate the mode-population product, the quartic overlap integral, the
chemical-potential gap and the rotation frequency of the minimal-density
line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .fields import DensityImage


class MeasurementError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArcRegion:
    """Arc-shaped integration region: r <= radius, |phi - center| <= half_angle."""

    center_angle: float
    half_angle: float
    radius: float

    def __post_init__(self):
        if not (0.0 < self.half_angle <= np.pi):
            raise MeasurementError("half_angle must lie in (0, pi]")
        if self.radius <= 0:
            raise MeasurementError("radius must be positive")


def _spline(img: DensityImage) -> RectBivariateSpline:
    return RectBivariateSpline(img.grid.x, img.grid.y, img.values, kx=3, ky=3)


def _max_radius(img: DensityImage) -> float:
    # largest disk fully inside the grid
    return 0.5 * min(img.grid.extent_x, img.grid.extent_y) - max(
        img.grid.dx, img.grid.dy
    )


def arc_integral(img: DensityImage, region: ArcRegion, n_r: int = 256,
                 n_phi: int = 64) -> float:
    """Integral of the image over the arc by Gauss-Legendre quadrature in
    polar coordinates on a cubic-spline interpolant (sub-cell accurate at
    the region boundary)."""
    rho = min(region.radius, _max_radius(img))
    if region.radius != np.inf and region.radius > _max_radius(img) + 1e-9:
        raise MeasurementError(
            f"arc radius {region.radius} exceeds the grid's inscribed disk"
        )
    sp = _spline(img)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    xa, wa = np.polynomial.legendre.leggauss(n_phi)
    r = 0.5 * rho * (xr + 1.0)
    wr = 0.5 * rho * wr
    phi = region.center_angle + region.half_angle * xa
    wa = region.half_angle * wa
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    X = R * np.cos(PHI)
    Y = R * np.sin(PHI)
    vals = sp.ev(X.ravel(), Y.ravel()).reshape(R.shape)
    return float(np.sum(vals * R * wr[:, None] * wa[None, :]))


def angular_density(img: DensityImage, n_phi: int = 720, n_r: int = 256):
    """g(phi) = int |psi|^2 r dr on a uniform angular grid."""
    sp = _spline(img)
    rho = _max_radius(img)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * rho * (xr + 1.0)
    wr = 0.5 * rho * wr
    phi = np.linspace(-np.pi, np.pi, n_phi, endpoint=False)
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    vals = sp.ev((R * np.cos(PHI)).ravel(), (R * np.sin(PHI)).ravel()).reshape(R.shape)
    g = np.sum(vals * R * wr[:, None], axis=0)
    return phi, g


def second_harmonic_coefficient(img: DensityImage, n_phi: int = 720) -> complex:
    """Complex coefficient of e^{2i phi} in the angular density.

    For a pure counter-rotating pair this equals the mode coherence
    sqrt(p+ p-) e^{-i chi(t)} with chi the fringe phase; its magnitude and
    phase drift carry the fringe amplitude and the nodal-line motion.
    """
    phi, g = angular_density(img, n_phi=n_phi)
    return complex(2.0 * np.pi * np.mean(g * np.exp(-2j * phi)))


@dataclass
class ExtremaFit:
    angle_max: float
    angle_min: float
    contrast: float      # fitted B/A of A + B*cos(2*(phi - phi0))
    mean_level: float


def locate_extrema(img: DensityImage, contrast_floor: float = 1e-3,
                   n_phi: int = 720) -> ExtremaFit:
    """Angles of the density maximum/minimum lines.

    Fits A + B*cos(2*(phi - phi0)) to the radially integrated angular
    density; the fit reaches sub-grid angular resolution. Raises when the
    fringe contrast is below the floor (balanced-free images carry no
    angular information).
    """
    phi, g = angular_density(img, n_phi=n_phi)
    A = float(np.mean(g))
    c = 2.0 * float(np.mean(g * np.cos(2 * phi)))
    s = 2.0 * float(np.mean(g * np.sin(2 * phi)))
    B = math.hypot(c, s)
    if A <= 0 or B / A < contrast_floor:
        raise MeasurementError(
            f"fringe contrast {B / max(A, 1e-300):.3g} below floor {contrast_floor}"
        )
    phi0 = 0.5 * math.atan2(s, c)
    angle_max = phi0
    angle_min = phi0 + np.pi / 2.0
    # report angles in (-pi, pi]
    angle_min = (angle_min + np.pi) % (2 * np.pi) - np.pi
    return ExtremaFit(angle_max=angle_max, angle_min=angle_min,
                      contrast=B / A, mean_level=A)


@dataclass
class ImbalanceEstimate:
    p_plus: float
    p_minus: float
    product: float
    imbalance: float            # |p+ - p-|; sign not knowable from one image
    sign_ambiguous: bool = True


def estimate_imbalance(img: DensityImage, theta: float = np.pi / 16,
                       rho: float | None = None,
                       finite_arc_correction: bool = True) -> ImbalanceEstimate:
    """Population product and imbalance from two arc integrals.

    Arcs of half-angle theta center on the fitted maximum and minimum lines;
    p+*p- = ((I1 - I2)/(2*(I1 + I2)))^2 after removing the known finite-arc
    attenuation sin(2*theta)/(2*theta) of the fringe term. A single image
    cannot tell which circulation dominates; the returned p_plus >= p_minus
    by convention and the estimate is flagged sign-ambiguous.
    """
    ext = locate_extrema(img)
    if rho is None:
        rho = _max_radius(img)
    i1 = arc_integral(img, ArcRegion(ext.angle_max, theta, rho))
    i2 = arc_integral(img, ArcRegion(ext.angle_min, theta, rho))
    ratio = (i1 - i2) / (2.0 * (i1 + i2))
    if finite_arc_correction:
        ratio /= math.sin(2.0 * theta) / (2.0 * theta)
    product = ratio**2
    disc = 1.0 - 4.0 * product
    if disc < -1e-6:
        raise MeasurementError(
            f"inconsistent image: p+*p- = {product:.6f} exceeds 1/4"
        )
    n = math.sqrt(max(disc, 0.0))
    return ImbalanceEstimate(
        p_plus=0.5 * (1.0 + n), p_minus=0.5 * (1.0 - n), product=product,
        imbalance=n,
    )


def estimate_overlap_integral(img: DensityImage, p_plus: float,
                              p_minus: float) -> float:
    """I = int |psi|^4 d^2r / (1 + 2*p+*p-), by direct 2D quadrature."""
    quartic = float(np.sum(img.values**2) * img.grid.cell_area)
    return quartic / (1.0 + 2.0 * p_plus * p_minus)


def estimate_delta(img: DensityImage, p_plus: float, p_minus: float,
                   angle_max: float | None = None, n_r: int = 4000,
                   density_floor: float = 1e-14) -> float:
    """Chemical-potential gap from the centrifugal-energy integral.

    Reads f0^2(r) along the maximum-density ray, then evaluates
    4 * int d^2r (f0/r)^2 = 8*pi * int f0^2/r dr, skipping radii where the
    profile is below the floor (the integrand is regular there but the
    division by r is not worth the noise).
    """
    if angle_max is None:
        angle_max = locate_extrema(img).angle_max
    sp = _spline(img)
    rho = _max_radius(img)
    r = np.linspace(rho / n_r, rho, n_r)
    vals = sp.ev(r * np.cos(angle_max), r * np.sin(angle_max))
    f0sq = vals / (1.0 + 2.0 * math.sqrt(max(p_plus * p_minus, 0.0)))
    mask = f0sq > density_floor
    if not np.any(mask):
        raise MeasurementError("degenerate ray: density below floor everywhere")
    return float(8.0 * np.pi * np.trapezoid(np.where(mask, f0sq / r, 0.0), r))


@dataclass
class NodalTrace:
    t: np.ndarray
    angle: np.ndarray            # unwrapped (period pi) minimum-line angle
    omega: float                 # rotation frequency, angle(t) ~ angle0 - omega*t
    intercept: float
    omega_stderr: float
    residual_rms: float


def fit_rotation(ts, raw_angles, max_step: float = np.pi / 4,
                 gap_frequency: float | None = None) -> NodalTrace:
    """Fit a rotation frequency to a series of minimum-line angles.

    Angles are unwrapped modulo pi (the fringe has angular period pi)
    assuming less than pi/4 of motion between frames, then fit with a
    straight line. When `gap_frequency` is given, harmonics of that
    frequency (the wobble induced by the weakly populated higher modes) are
    included in the linear least squares and the line component is
    reported, which sharpens the fit on short windows.
    """
    ts = np.asarray(ts, dtype=float)
    raw = np.asarray(raw_angles, dtype=float)
    if len(ts) < 5:
        raise MeasurementError("need at least 5 samples to fit a rotation rate")
    ang = np.empty_like(raw)
    ang[0] = raw[0]
    for i in range(1, len(raw)):
        step = (raw[i] - ang[i - 1] + np.pi / 2) % np.pi - np.pi / 2
        if abs(step) >= max_step:
            raise MeasurementError(
                f"frame spacing too coarse for unwrapping: step {step:.3f} rad"
            )
        ang[i] = ang[i - 1] + step
    cols = [np.ones_like(ts), ts]
    if gap_frequency is not None and gap_frequency > 0:
        for h in (1.0, 2.0):
            cols.append(np.cos(h * gap_frequency * ts))
            cols.append(np.sin(h * gap_frequency * ts))
    A = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(A, ang, rcond=None)
    resid = ang - A @ coef
    dof = max(len(ts) - A.shape[1], 1)
    cov = float(resid @ resid) / dof * np.linalg.inv(A.T @ A)
    return NodalTrace(
        t=ts, angle=ang, omega=float(-coef[1]), intercept=float(coef[0]),
        omega_stderr=float(np.sqrt(cov[1, 1])),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


def track_nodal_line(images, max_step: float = np.pi / 4,
                     gap_frequency: float | None = None) -> NodalTrace:
    """Fit the nodal-line rotation frequency from an image sequence."""
    imgs = list(images)
    if len(imgs) < 5:
        raise MeasurementError("need at least 5 images to fit a rotation rate")
    ts = np.array([im.time for im in imgs], dtype=float)
    raw = np.array([locate_extrema(im).angle_min for im in imgs])
    return fit_rotation(ts, raw, max_step=max_step, gap_frequency=gap_frequency)


def coherence_frequency(t, rho_series) -> float:
    """Angular frequency of the mode coherence rho_{1+,1-}(t).

    For complex input the signed frequency comes from the unwrapped phase
    slope; for a real series (e.g. only Re rho was recorded) a sinusoid
    least-squares fit seeded by the FFT peak returns the magnitude.
    """
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho_series)
    if len(t) < 4:
        raise MeasurementError("need at least 4 coherence samples")
    if np.iscomplexobj(rho):
        amp = np.abs(rho)
        if np.max(amp) < 1e-12:
            raise MeasurementError("flat coherence series")
        phase = np.unwrap(np.angle(rho))
        return float(np.polyfit(t, phase, 1)[0])
    # real series: FFT seed + local refinement
    y = rho - np.mean(rho)
    if np.max(np.abs(y)) < 1e-12:
        return 0.0
    dt = t[1] - t[0]
    freqs = np.fft.rfftfreq(len(y), dt) * 2.0 * np.pi
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y))))
    w0 = freqs[int(np.argmax(spec[1:])) + 1]

    from scipy.optimize import least_squares

    def model(p):
        a, b, w = p
        return a * np.cos(w * t) + b * np.sin(w * t) - y

    sol = least_squares(model, x0=[y[0], 0.0, w0])
    return float(abs(sol.x[2]))


def _sideband_design(ts, om2, gap):
    """Three-tone basis for the complex fringe coefficient.

    The slow tone rotates at om2 = 2*Omega; the two sidebands come from the
    weakly populated higher modes beating against the main pair. Their
    frequencies are not symmetric about the slow tone: the three mode
    frequencies sum to zero, so the upper offset equals gap - 3*om2 when
    the lower offset is gap.
    """
    freqs = np.array([om2, om2 - gap, gap - 2.0 * om2])
    return np.exp(1j * np.outer(ts, freqs))


def fit_fringe_harmonic(ts, coeffs, om2_seed: float, gap_seed: float):
    """Separate the slow fringe rotation from its wobble sidebands.

    Models the complex fringe coefficient as a sum of three tones whose
    frequencies sum to zero (slow tone at 2*Omega plus two sidebands of the
    higher-mode beating). Amplitudes are solved linearly for each trial
    frequency pair (variable projection); the slow frequency is seeded by a
    coarse residual scan to avoid local minima of the phase-wrapped fit.
    Returns (om2, gap, amplitudes, om2_stderr).
    """
    from scipy.optimize import least_squares

    ts = np.asarray(ts, dtype=float)
    c = np.asarray(coeffs, dtype=complex)

    def solve_amps(om2, gap):
        M = _sideband_design(ts, om2, gap)
        amps, *_ = np.linalg.lstsq(M, c, rcond=None)
        return M, amps

    def resid(p):
        M, amps = solve_amps(p[0], p[1])
        r = M @ amps - c
        return np.concatenate([r.real, r.imag])

    # coarse scan of the slow frequency around the phase-slope seed; the
    # wobble biases that seed by up to a few spectral bins
    width = max(0.75 * abs(om2_seed), 3.0 * 2.0 * np.pi / max(
        ts[-1] - ts[0], 1e-12))
    scan = om2_seed + np.linspace(-width, width, 241)
    costs = [np.linalg.norm(resid((o, gap_seed + 1.5 * o))) for o in scan]
    om2_0 = float(scan[int(np.argmin(costs))])
    sol = least_squares(resid, x0=[om2_0, gap_seed + 1.5 * om2_0],
                        x_scale=[max(abs(om2_0), 1e-6), gap_seed],
                        method="lm")
    om2, gap = sol.x
    _, amps = solve_amps(om2, gap)
    # 1-sigma from the residual scale and the frequency Jacobian
    dof = max(len(sol.fun) - 8, 1)
    jtj = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(jtj) * float(sol.fun @ sol.fun) / dof
        om2_err = float(np.sqrt(max(cov[0, 0], 0.0)))
    except np.linalg.LinAlgError:
        om2_err = float("nan")
    return float(om2), float(abs(gap)), amps, om2_err


def extrapolate_to_start(ts, values, gap: float, harmonics: int = 2):
    """Value of a wobbling per-frame series at t = 0.

    The higher-mode amplitudes vanish exactly when the counter-rotating
    superposition is prepared, so every image functional is unbiased at
    t = 0; afterwards it oscillates at the gap frequency. A linear fit of
    1 + gap harmonics evaluated at t = 0 recovers the clean value from the
    whole sequence. Returns (value, standard error).
    """
    ts = np.asarray(ts, dtype=float)
    y = np.asarray(values, dtype=float)
    cols = [np.ones_like(ts)]
    for h in range(1, harmonics + 1):
        cols.append(np.cos(h * gap * ts))
        cols.append(np.sin(h * gap * ts))
    A = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(ts) - A.shape[1], 1)
    try:
        cov = np.linalg.inv(A.T @ A) * float(resid @ resid) / dof
        # at t=0 every cosine column is 1 and every sine column is 0
        w = np.array([1.0 if i == 0 or i % 2 == 1 else 0.0
                      for i in range(A.shape[1])])
        err = float(np.sqrt(max(w @ cov @ w, 0.0)))
    except np.linalg.LinAlgError:
        err = float("nan")
    value = float(coef[0] + sum(coef[i] for i in range(1, A.shape[1], 2)))
    return value, err


@dataclass
class MeasurementReport:
    """Aggregated image-only estimates with simple scatter-based errors."""

    p_plus: float
    p_minus: float
    imbalance: float
    overlap_integral: float
    delta: float
    omega: float
    omega_stderr: float
    p_product_stderr: float = 0.0
    overlap_stderr: float = 0.0
    delta_stderr: float = 0.0
    n_images: int = 0
    sign_resolved_from_rotation: bool = False
    config: dict = field(default_factory=dict)


def measure_sequence(images, theta: float = np.pi / 16,
                     start_extrapolation: bool = True) -> MeasurementReport:
    """Run the full protocol on an image sequence.

    Per-frame estimates of the population product, overlap integral and gap
    wobble deterministically at the gap frequency because the weakly
    populated higher modes beat against the main pair; since those modes
    vanish exactly at preparation (t = 0), each series is fit with gap
    harmonics and read off at t = 0. The rotation frequency comes from a
    two-frequency fit of the complex fringe coefficient, which separates
    the slow fringe rotation from the same sidebands. The dominant
    circulation sign is taken from the rotation direction, which a single
    image cannot provide.

    With fewer than 5 images, or a window too short to resolve the wobble,
    plain per-frame averaging is used instead.
    """
    imgs = list(images)
    if not imgs:
        raise MeasurementError("no images supplied")
    ts = np.array([im.time for im in imgs], dtype=float)
    prods, ids, deltas, c2s = [], [], [], []
    for im in imgs:
        est = estimate_imbalance(im, theta=theta)
        prods.append(est.product)
        ids.append(estimate_overlap_integral(im, est.p_plus, est.p_minus))
        deltas.append(estimate_delta(im, est.p_plus, est.p_minus))
        c2s.append(second_harmonic_coefficient(im))
    prods = np.array(prods)
    ids = np.array(ids)
    deltas = np.array(deltas)
    c2s = np.array(c2s)
    gap_seed = float(np.mean(deltas))
    span = ts[-1] - ts[0]
    # resolve at least one wobble period and leave dof for the harmonics
    resolved = (len(imgs) >= 8 and gap_seed > 0
                and span * gap_seed > 2.0 * np.pi)
    sem = lambda arr: float(np.std(arr) / math.sqrt(len(imgs)))
    if start_extrapolation and resolved:
        # the slow rotation drifts over long sequences as the populations
        # leak; restrict the frequency fit to the first few wobble periods,
        # which is what the constant-population model describes
        cap = ts[0] + 2.0 * 2.0 * np.pi / gap_seed
        win = ts <= cap if np.count_nonzero(ts <= cap) >= 12 else slice(None)
        om2_seed = float(np.polyfit(ts[win],
                                    np.unwrap(np.angle(c2s[win])), 1)[0])
        om2, gap, _, om2_err = fit_fringe_harmonic(ts[win], c2s[win],
                                                   om2_seed, gap_seed)
        omega, omega_err = 0.5 * om2, 0.5 * om2_err
        product, prod_err = extrapolate_to_start(ts, prods, gap)
        overlap, overlap_err = extrapolate_to_start(ts, ids, gap)
        delta, delta_err = extrapolate_to_start(ts, deltas, gap)
        if gap_seed * ts[0] < 0.3:
            # the earliest frame precedes any higher-mode growth, so its
            # functionals are unbiased; keep the fit residual as the error
            product, prod_err = float(prods[0]), max(
                prod_err, abs(product - prods[0]))
            overlap, overlap_err = float(ids[0]), max(
                overlap_err, abs(overlap - ids[0]))
            delta, delta_err = float(deltas[0]), max(
                delta_err, abs(delta - deltas[0]))
        sign_resolved = True
    else:
        product, prod_err = float(np.mean(prods)), sem(prods)
        overlap, overlap_err = float(np.mean(ids)), sem(ids)
        delta, delta_err = float(np.mean(deltas)), sem(deltas)
        if len(imgs) >= 5:
            trace = track_nodal_line(imgs, gap_frequency=delta or None)
            omega, omega_err = trace.omega, trace.omega_stderr
            sign_resolved = True
        else:
            omega, omega_err, sign_resolved = 0.0, float("inf"), False
    product = min(max(product, 0.0), 0.25)
    nmag = math.sqrt(max(1.0 - 4.0 * product, 0.0))
    return MeasurementReport(
        p_plus=0.5 * (1 + nmag), p_minus=0.5 * (1 - nmag), imbalance=nmag,
        overlap_integral=overlap, delta=delta, omega=omega,
        omega_stderr=omega_err, p_product_stderr=prod_err,
        overlap_stderr=overlap_err, delta_stderr=delta_err,
        n_images=len(imgs), sign_resolved_from_rotation=sign_resolved,
        config={"theta": theta, "start_extrapolation": bool(
            start_extrapolation and resolved)},
    )
