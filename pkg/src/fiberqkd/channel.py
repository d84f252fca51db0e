"""Fiber channel model: loss plus first- and higher-order PMD.

The fiber is a cascade of birefringent segments. At detuning ``delta_omega``
from the reference wavelength, segment ``i`` rotates the Stokes vector about
its principal axis by ``dgd_i * delta_omega``. Every segment rotation
vanishes at the reference wavelength, so the static part of the channel is
normalized to the identity by construction and only the frequency dependence
survives. A single segment reproduces pure first-order PMD; a cascade of
randomly oriented segments adds the higher orders.

Wavelengths are in nm, delay in ps, so detunings come out in rad/ps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import ValidationError
from .polarization import (
    normalize,
    perpendicular_unit,
    random_unit,
    require_unit,
    rotate,
    rotate_rows,
    rotation_taking,
    stokes_of,
)

SPEED_OF_LIGHT_NM_PER_PS = 299792.458


def delta_omega(wavelength_nm: float, reference_nm: float) -> float:
    """Angular-frequency detuning in rad/ps of a wavelength from a reference.

    Uses the exact relation 2*pi*c*(1/lambda - 1/lambda_ref), negative for
    wavelengths above the reference.
    """
    if wavelength_nm <= 0.0 or reference_nm <= 0.0:
        raise ValidationError("wavelengths must be positive")
    return float(
        2.0 * np.pi * SPEED_OF_LIGHT_NM_PER_PS * (1.0 / wavelength_nm - 1.0 / reference_nm)
    )


@dataclass(frozen=True)
class PmdVector:
    """First-order PMD vector: principal-axis direction and total delay."""

    axis: tuple[float, float, float]
    dgd_ps: float


@dataclass(frozen=True)
class FiberSegment:
    """One birefringent element, its fast axis on the sphere and its delay."""

    axis: tuple[float, float, float]
    dgd_ps: float

    def __post_init__(self):
        require_unit(self.axis, "segment axis")
        if self.dgd_ps < 0.0:
            raise ValidationError("segment delay must be non-negative")


@dataclass(frozen=True)
class FiberChannel:
    """A lossy fiber with a fixed cascade of birefringent segments."""

    segments: tuple[FiberSegment, ...]
    loss_db: float
    length_km: float
    reference_nm: float

    def __post_init__(self):
        if self.loss_db < 0.0:
            raise ValidationError("loss must be non-negative")
        if self.length_km <= 0.0:
            raise ValidationError("length must be positive")
        if self.reference_nm <= 0.0:
            raise ValidationError("reference wavelength must be positive")

    @property
    def transmittance(self) -> float:
        return float(10.0 ** (-self.loss_db / 10.0))


def apply_channel(state, channel: FiberChannel, wavelength_nm: float) -> np.ndarray:
    """Propagate one Stokes vector through the channel at one wavelength."""
    dw = delta_omega(wavelength_nm, channel.reference_nm)
    out = require_unit(state, "state")
    for seg in channel.segments:
        out = rotate(out, np.array(seg.axis), seg.dgd_ps * dw)
    return out


def apply_channel_rows(states: np.ndarray, channel: FiberChannel, wavelengths_nm) -> np.ndarray:
    """Vectorized propagation: row i of ``states`` goes through at wavelength i."""
    lam = np.asarray(wavelengths_nm, dtype=float)
    if np.any(lam <= 0.0):
        raise ValidationError("wavelengths must be positive")
    dw = (
        2.0
        * np.pi
        * SPEED_OF_LIGHT_NM_PER_PS
        * (1.0 / lam - 1.0 / channel.reference_nm)
    )
    out = np.array(states, dtype=float)
    for seg in channel.segments:
        out = rotate_rows(out, np.array(seg.axis), seg.dgd_ps * dw)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    return out / norms


def first_order_pmd(channel: FiberChannel) -> PmdVector:
    """Leading-order PMD vector at the reference wavelength.

    With every segment rotation zero at the reference, the first-order vector
    is the plain sum of the segment delay vectors.
    """
    total = np.zeros(3)
    for seg in channel.segments:
        total += seg.dgd_ps * np.array(seg.axis)
    dgd = float(np.linalg.norm(total))
    if dgd == 0.0:
        return PmdVector(axis=(1.0, 0.0, 0.0), dgd_ps=0.0)
    return PmdVector(axis=tuple(total / dgd), dgd_ps=dgd)


def synthesize_channel(
    pmd_param_ps_per_sqrt_km: float,
    length_km: float,
    n_segments: int,
    seed: int,
    loss_db: float = 0.0,
    reference_nm: float = 1309.5,
) -> FiberChannel:
    """Draw a random channel whose RMS total delay matches a PMD parameter.

    Segment axes are isotropic and every segment carries the same delay
    ``pmd_param * sqrt(length) / sqrt(n_segments)``; the vector sum then
    performs a 3-d random walk whose RMS length is ``pmd_param * sqrt(length)``
    independent of the segment count.
    """
    if pmd_param_ps_per_sqrt_km < 0.0:
        raise ValidationError("PMD parameter must be non-negative")
    if n_segments < 1:
        raise ValidationError("need at least one segment")
    rng = np.random.default_rng(seed)
    per_segment = pmd_param_ps_per_sqrt_km * np.sqrt(length_km) / np.sqrt(n_segments)
    segments = tuple(
        FiberSegment(axis=tuple(random_unit(rng)), dgd_ps=float(per_segment))
        for _ in range(n_segments)
    )
    return FiberChannel(
        segments=segments, loss_db=loss_db, length_km=length_km, reference_nm=reference_nm
    )


def align_first_order_axis(channel: FiberChannel, target) -> FiberChannel:
    """Rigidly rotate all segment axes so the first-order axis hits ``target``.

    ``target`` is a cardinal-state label or a unit vector. Useful for pinning
    a synthesized channel's principal states onto a chosen encoder basis.
    """
    goal = stokes_of(target) if isinstance(target, str) else require_unit(target, "target")
    pmd = first_order_pmd(channel)
    if pmd.dgd_ps == 0.0:
        raise ValidationError("channel has no first-order PMD to align")
    axis, angle = rotation_taking(np.array(pmd.axis), goal)
    rotated = tuple(
        replace(seg, axis=tuple(rotate(np.array(seg.axis), axis, angle)))
        for seg in channel.segments
    )
    return replace(channel, segments=rotated)


@dataclass(frozen=True)
class TrajectoryPoint:
    """Output Stokes vector observed at one probe wavelength."""

    wavelength_nm: float
    stokes: tuple[float, float, float]


def sweep_trajectory(
    channel: FiberChannel,
    state,
    start_nm: float,
    stop_nm: float,
    n_points: int,
) -> list[TrajectoryPoint]:
    """Trace the channel output of one input state across a wavelength sweep."""
    if n_points < 2:
        raise ValidationError("a sweep needs at least two points")
    if not (0.0 < start_nm < stop_nm):
        raise ValidationError("need 0 < start_nm < stop_nm")
    lam = np.linspace(start_nm, stop_nm, n_points)
    s = require_unit(state, "state")
    rows = apply_channel_rows(np.tile(s, (n_points, 1)), channel, lam)
    return [
        TrajectoryPoint(wavelength_nm=float(w), stokes=tuple(row))
        for w, row in zip(lam, rows)
    ]


@dataclass(frozen=True)
class ArcFit:
    """Small-circle fit of a wavelength trajectory.

    ``axis`` is oriented so the trajectory advances right-handed with
    increasing optical frequency. ``polar_angle_rad`` is the opening angle
    between the axis and the points, ``rotation_angle_rad`` the azimuth swept
    about the axis, and ``central_angle_rad`` the great-circle arc length
    actually traced, i.e. rotation * sin(polar). ``rms_residual_rad`` is the
    scatter of the points' polar angles about their mean.
    """

    axis: tuple[float, float, float]
    polar_angle_rad: float
    rotation_angle_rad: float
    central_angle_rad: float
    rms_residual_rad: float
    n_points: int
    degenerate: bool = False


def _polar_angles(points: np.ndarray, axis: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(points @ axis, -1.0, 1.0))


def _azimuths(points: np.ndarray, axis: np.ndarray) -> np.ndarray:
    u = perpendicular_unit(axis)
    v = np.cross(axis, u)
    return np.unwrap(np.arctan2(points @ v, points @ u))


def fit_arc(points: Sequence[TrajectoryPoint]) -> ArcFit:
    """Fit a circle on the sphere to a swept trajectory.

    The axis is seeded by a least-squares plane through the points and then
    refined by minimizing the spread of their polar angles. Points must be
    ordered along the sweep with adjacent azimuth steps below half a turn,
    otherwise the unwrapped rotation angle is ambiguous.
    """
    if len(points) < 3:
        raise ValidationError("an arc fit needs at least three points")
    pts = np.array([p.stokes for p in points], dtype=float)
    lams = np.array([p.wavelength_nm for p in points], dtype=float)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValidationError("trajectory points must be unit Stokes vectors")
    pts = pts / norms[:, None]

    chord = float(np.max(np.linalg.norm(pts - pts[0], axis=1)))
    if chord < 1e-9:
        # All points coincide: the input sits on a principal state, nothing
        # rotates, and no axis is identifiable.
        return ArcFit(
            axis=(0.0, 0.0, 0.0),
            polar_angle_rad=0.0,
            rotation_angle_rad=0.0,
            central_angle_rad=0.0,
            rms_residual_rad=0.0,
            n_points=len(points),
            degenerate=True,
        )

    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    seed_axis = normalize(vt[-1])

    e1 = perpendicular_unit(seed_axis)
    e2 = np.cross(seed_axis, e1)

    def axis_of(params):
        tilt1, tilt2 = params
        n = rotate(seed_axis, e1, tilt1)
        return rotate(n, e2, tilt2)

    def residual(params):
        beta = _polar_angles(pts, axis_of(params))
        return beta - beta.mean()

    sol = least_squares(residual, x0=[0.0, 0.0], method="lm")
    axis = axis_of(sol.x)

    # Orient the axis so azimuth grows with optical frequency. Frequency
    # detuning decreases with wavelength, so the handedness test flips the
    # wavelength ordering.
    phi = _azimuths(pts, axis)
    dlam = lams[-1] - lams[0]
    if dlam != 0.0 and (phi[-1] - phi[0]) * (-dlam) < 0.0:
        axis = -axis
        phi = _azimuths(pts, axis)

    beta = _polar_angles(pts, axis)
    polar = float(beta.mean())
    rms = float(np.sqrt(np.mean((beta - polar) ** 2)))
    span = float(np.max(phi) - np.min(phi))
    radius = float(np.sin(polar))
    return ArcFit(
        axis=tuple(axis),
        polar_angle_rad=polar,
        rotation_angle_rad=span,
        central_angle_rad=span * radius,
        rms_residual_rad=rms,
        n_points=len(points),
        degenerate=radius < 1e-6,
    )


def estimate_dgd(central_angle_rad: float, span_nm: float, center_nm: float) -> float:
    """Differential group delay implied by an arc's length over a sweep.

    The arc length equals dgd times the detuning range covered, evaluated
    exactly from the sweep's end wavelengths.
    """
    if central_angle_rad < 0.0:
        raise ValidationError("central angle must be non-negative")
    if span_nm <= 0.0:
        raise ValidationError("sweep span must be positive")
    lo = center_nm - 0.5 * span_nm
    hi = center_nm + 0.5 * span_nm
    if lo <= 0.0:
        raise ValidationError("sweep extends to non-physical wavelengths")
    width = abs(delta_omega(hi, lo))
    return float(central_angle_rad / width)


def rotation_angle_for_dgd(dgd_ps: float, span_nm: float, center_nm: float) -> float:
    """Inverse of :func:`estimate_dgd`: rotation swept by a given delay."""
    if dgd_ps < 0.0:
        raise ValidationError("delay must be non-negative")
    lo = center_nm - 0.5 * span_nm
    hi = center_nm + 0.5 * span_nm
    return float(dgd_ps * abs(delta_omega(hi, lo)))


def pmd_parameter(total_dgd_ps: float, length_km: float) -> float:
    """Length-normalized PMD parameter in ps per sqrt(km)."""
    if total_dgd_ps < 0.0:
        raise ValidationError("delay must be non-negative")
    if length_km <= 0.0:
        raise ValidationError("length must be positive")
    return float(total_dgd_ps / np.sqrt(length_km))


def qber_from_pmd(state, channel: FiberChannel, spectrum, n_samples: int = 201) -> float:
    """Spectrally averaged misalignment error a broadband pulse suffers.

    The channel output is compared against the undisturbed state (which is
    also the output at the reference wavelength) and the wrong-port
    probability is integrated against the emitter's spectral density with a
    trapezoid rule on a uniform grid.
    """
    if n_samples < 201:
        raise ValidationError("quadrature needs at least 201 samples")
    s = require_unit(state, "state")
    lo, hi = spectrum.support()
    lam = np.linspace(lo, hi, n_samples)
    weights = spectrum.density(lam)
    rows = apply_channel_rows(np.tile(s, (n_samples, 1)), channel, lam)
    err = 0.5 * (1.0 - rows @ s)
    total = np.trapezoid(weights, lam)
    if total <= 0.0:
        raise ValidationError("spectral density integrates to zero on its support")
    value = np.trapezoid(weights * err, lam) / total
    return float(np.clip(value, 0.0, 1.0))


def write_trajectory_csv(path, points: Sequence[TrajectoryPoint]) -> None:
    """Write a trajectory as CSV with header wavelength_nm,s1,s2,s3."""
    with open(path, "w", newline="") as handle:
        _write_trajectory(handle, points)


def trajectory_csv_text(points: Sequence[TrajectoryPoint]) -> str:
    buf = io.StringIO()
    _write_trajectory(buf, points)
    return buf.getvalue()


def _write_trajectory(handle, points: Sequence[TrajectoryPoint]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["wavelength_nm", "s1", "s2", "s3"])
    for p in points:
        writer.writerow([repr(float(p.wavelength_nm))] + [repr(float(x)) for x in p.stokes])


def read_trajectory_csv(path) -> list[TrajectoryPoint]:
    """Read a trajectory CSV produced by :func:`write_trajectory_csv`."""
    points: list[TrajectoryPoint] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["wavelength_nm", "s1", "s2", "s3"]:
            raise ValidationError("trajectory CSV must start with wavelength_nm,s1,s2,s3")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"malformed trajectory row: {row!r}")
            try:
                lam, s1, s2, s3 = (float(x) for x in row)
            except ValueError as exc:
                raise ValidationError(f"non-numeric trajectory row: {row!r}") from exc
            points.append(TrajectoryPoint(wavelength_nm=lam, stokes=(s1, s2, s3)))
    if not points:
        raise ValidationError("trajectory CSV contains no data rows")
    return points
