"""Slot-level BB84 session engine with a passive-basis receiver.

The transmitter prepares one of the four equatorial states per clock slot,
choosing the basis with a configurable bias (or replaying a supplied
modulation pattern). The receiver is passive: each arriving photon takes one
arm of a splitter and is projected onto that arm's basis, so four detectors
named after the outcome states D, A, L and R report clicks. Dark counts fire
independently on every detector each slot. Slots with exactly one click in
the transmitter's basis survive sifting; double clicks follow a configurable
policy and cross-basis coincidences are always discarded.

``run_session`` is a chunked vectorized Monte Carlo over slots with a fixed
draw order, so a seed pins the whole session byte for byte.
``expected_rates`` gives the matching closed-form detection, sifting and
error rates used for calibration and for optimizer objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .channel import FiberChannel, apply_channel_rows, qber_from_pmd
from .emitter import EmitterSpectrum, PhotonStatistics, sample_photon_number
from .errors import PatternExhaustedError, ValidationError
from .polarization import BASIS_STATES, DETECTOR_ORDER, PROTOCOL_STATES, stokes_of

_CHUNK = 1_000_000

# Detector index -> (basis label, bit); follows DETECTOR_ORDER = D, A, L, R.
_DET_BASIS = ("DA", "DA", "LR", "LR")
_DET_BIT = (0, 1, 0, 1)
_BASIS_LABELS = ("DA", "LR")

DOUBLE_CLICK_POLICIES = ("discard", "random")


@dataclass(frozen=True)
class DeviceParams:
    """Hardware constants of one link: clock, detectors and fixed losses."""

    rep_rate_hz: float
    detector_efficiency: float
    dark_prob: float
    intrinsic_error: float
    alice_loss_db: float = 0.0
    bob_loss_db: float = 0.0

    def __post_init__(self):
        if self.rep_rate_hz <= 0.0:
            raise ValidationError("repetition rate must be positive")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ValidationError("detector efficiency must lie in (0, 1]")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValidationError("dark probability must lie in [0, 1)")
        if not 0.0 <= self.intrinsic_error <= 0.5:
            raise ValidationError("intrinsic error must lie in [0, 0.5]")
        if self.alice_loss_db < 0.0 or self.bob_loss_db < 0.0:
            raise ValidationError("losses must be non-negative")


def survival_probability(
    device: DeviceParams, channel_loss_db: float, detection_scale: float = 1.0
) -> float:
    """End-to-end detection probability for one photon leaving the source."""
    if channel_loss_db < 0.0:
        raise ValidationError("channel loss must be non-negative")
    if detection_scale <= 0.0:
        raise ValidationError("detection scale must be positive")
    total_db = device.alice_loss_db + channel_loss_db + device.bob_loss_db
    p = 10.0 ** (-total_db / 10.0) * device.detector_efficiency * detection_scale
    if p > 1.0:
        raise ValidationError(f"survival probability {p:.6g} exceeds one")
    return float(p)


class PatternSource:
    """Pre-recorded modulation pattern, two bits per pulse.

    Within each byte, pairs are consumed most-significant bits first; the
    first bit of a pair selects the basis (0 for DA, 1 for LR) and the second
    the encoded bit value.
    """

    def __init__(self, data: bytes):
        if len(data) == 0:
            raise ValidationError("pattern is empty")
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self._cursor = 0

    @classmethod
    def from_hex(cls, text: str) -> "PatternSource":
        cleaned = "".join(text.split())
        try:
            return cls(bytes.fromhex(cleaned))
        except ValueError as exc:
            raise ValidationError(f"invalid hex pattern: {exc}") from exc

    @classmethod
    def from_file(cls, path, fmt: str = "auto") -> "PatternSource":
        if fmt not in ("auto", "hex", "binary"):
            raise ValidationError(f"unknown pattern format {fmt!r}")
        if fmt == "auto":
            fmt = "binary" if str(path).endswith(".bin") else "hex"
        if fmt == "binary":
            with open(path, "rb") as handle:
                return cls(handle.read())
        with open(path) as handle:
            return cls.from_hex(handle.read())

    @property
    def remaining_pairs(self) -> int:
        return (self._bits.size - self._cursor) // 2

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` (basis, value) pairs; raises when the pattern runs out."""
        if n < 0:
            raise ValidationError("cannot take a negative number of pairs")
        if n > self.remaining_pairs:
            raise PatternExhaustedError(
                f"pattern has {self.remaining_pairs} pairs left, {n} requested"
            )
        chunk = self._bits[self._cursor : self._cursor + 2 * n]
        self._cursor += 2 * n
        return chunk[0::2].astype(np.int64), chunk[1::2].astype(np.int64)


@dataclass(frozen=True)
class AliceSettings:
    """Transmitter-side basis bias and optional fixed pattern."""

    p_key: float = 0.5
    pattern: PatternSource | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.p_key < 1.0:
            raise ValidationError("key-basis probability must lie strictly in (0, 1)")

    @property
    def p_check(self) -> float:
        return 1.0 - self.p_key


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to run or predict one session."""

    device: DeviceParams
    stats: PhotonStatistics
    spectrum: EmitterSpectrum
    channel: FiberChannel
    alice: AliceSettings = AliceSettings()
    bob_split: float = 0.5
    key_basis: str = "DA"
    double_click_policy: str = "discard"
    detection_scale: float = 1.0
    window_s: float = 20.0

    def __post_init__(self):
        if self.key_basis not in BASIS_STATES:
            raise ValidationError(f"unknown key basis {self.key_basis!r}")
        if not 0.0 < self.bob_split < 1.0:
            raise ValidationError("receiver splitting ratio must lie in (0, 1)")
        if self.double_click_policy not in DOUBLE_CLICK_POLICIES:
            raise ValidationError(
                f"double-click policy must be one of {DOUBLE_CLICK_POLICIES}"
            )
        if self.window_s <= 0.0:
            raise ValidationError("window length must be positive")
        # Fails early when losses, efficiency and scale are inconsistent.
        survival_probability(self.device, self.channel.loss_db, self.detection_scale)

    @property
    def check_basis(self) -> str:
        return "LR" if self.key_basis == "DA" else "DA"


@dataclass(frozen=True)
class SlotRecord:
    """One clicked slot: what was sent and which detectors fired."""

    slot: int
    alice_basis: str
    alice_bit: int
    detections: tuple[str, ...]


@dataclass(frozen=True)
class SiftResult:
    """Tallies of one sifting pass over a session."""

    n_pulses: int
    n_detections: int
    n_double_discarded: int
    n_cross_discarded: int
    n_basis_mismatch: int
    kept_da: int
    errors_da: int
    kept_lr: int
    errors_lr: int
    key_basis: str = "DA"

    @property
    def n_sifted(self) -> int:
        return self.kept_da + self.kept_lr

    @property
    def qber_da(self) -> float:
        return self.errors_da / self.kept_da if self.kept_da else math.nan

    @property
    def qber_lr(self) -> float:
        return self.errors_lr / self.kept_lr if self.kept_lr else math.nan

    @property
    def n_sifted_key(self) -> int:
        return self.kept_da if self.key_basis == "DA" else self.kept_lr

    @property
    def n_sifted_check(self) -> int:
        return self.kept_lr if self.key_basis == "DA" else self.kept_da

    @property
    def n_errors_key(self) -> int:
        return self.errors_da if self.key_basis == "DA" else self.errors_lr

    @property
    def n_errors_check(self) -> int:
        return self.errors_lr if self.key_basis == "DA" else self.errors_da

    @property
    def e_key(self) -> float:
        return self.n_errors_key / self.n_sifted_key if self.n_sifted_key else math.nan

    @property
    def e_check(self) -> float:
        return (
            self.n_errors_check / self.n_sifted_check if self.n_sifted_check else math.nan
        )

    @property
    def p_det(self) -> float:
        return self.n_detections / self.n_pulses if self.n_pulses else math.nan

    @property
    def sift_fraction(self) -> float:
        return self.n_sifted / self.n_pulses if self.n_pulses else math.nan


@dataclass(frozen=True)
class WindowStat:
    """Sifted throughput and error rate over one time window."""

    index: int
    n_sifted: int
    n_errors: int
    window_s: float

    @property
    def qber(self) -> float:
        return self.n_errors / self.n_sifted if self.n_sifted else math.nan

    @property
    def sifted_bps(self) -> float:
        return self.n_sifted / self.window_s


@dataclass(frozen=True)
class SessionResult:
    """Output of one Monte-Carlo session."""

    sift: SiftResult
    windows: tuple[WindowStat, ...]
    records: tuple[SlotRecord, ...] | None
    n_pulses: int
    duration_s: float
    seed: int
    truncated: bool = False


class _Tally:
    """Mutable sift counters shared by the engine and the offline sifter."""

    __slots__ = (
        "n_pulses",
        "n_detections",
        "n_double",
        "n_cross",
        "n_mismatch",
        "kept",
        "errors",
    )

    def __init__(self):
        self.n_pulses = 0
        self.n_detections = 0
        self.n_double = 0
        self.n_cross = 0
        self.n_mismatch = 0
        self.kept = {"DA": 0, "LR": 0}
        self.errors = {"DA": 0, "LR": 0}

    def result(self, key_basis: str) -> SiftResult:
        return SiftResult(
            n_pulses=self.n_pulses,
            n_detections=self.n_detections,
            n_double_discarded=self.n_double,
            n_cross_discarded=self.n_cross,
            n_basis_mismatch=self.n_mismatch,
            kept_da=self.kept["DA"],
            errors_da=self.errors["DA"],
            kept_lr=self.kept["LR"],
            errors_lr=self.errors["LR"],
            key_basis=key_basis,
        )


def _classify_multiclick(
    detections: Sequence[str],
    alice_basis: str,
    alice_bit: int,
    policy: str,
    rng: np.random.Generator | None,
    tally: _Tally,
) -> None:
    """Apply the sifting rules to a slot with two or more clicks."""
    bases = {d: _DET_BASIS[DETECTOR_ORDER.index(d)] for d in detections}
    present = set(bases.values())
    if len(present) > 1:
        tally.n_cross += 1
        return
    basis = next(iter(present))
    # Both detectors of one basis fired.
    if policy == "discard":
        tally.n_double += 1
        return
    if rng is None:
        raise ValidationError("random double-click policy needs a random generator")
    if basis != alice_basis:
        tally.n_mismatch += 1
        return
    bit = int(rng.integers(0, 2))
    tally.kept[basis] += 1
    if bit != alice_bit:
        tally.errors[basis] += 1


def sift(
    alice_records: Iterable[tuple[int, str, int]],
    bob_records: Iterable[tuple[int, Sequence[str]]],
    *,
    policy: str = "discard",
    key_basis: str = "DA",
    rng: np.random.Generator | None = None,
    n_pulses: int | None = None,
) -> SiftResult:
    """Offline sifting of paired transmitter and receiver records.

    Records are (slot, basis, bit) and (slot, detector labels); slot ids must
    match pairwise. Slots with no click are ignored, single clicks in the
    matching basis are kept, cross-basis coincidences dropped, and same-basis
    double clicks follow ``policy``. ``n_pulses`` defaults to the record
    count, which is only right when every slot is present.
    """
    if policy not in DOUBLE_CLICK_POLICIES:
        raise ValidationError(f"double-click policy must be one of {DOUBLE_CLICK_POLICIES}")
    if key_basis not in BASIS_STATES:
        raise ValidationError(f"unknown key basis {key_basis!r}")
    alice = list(alice_records)
    bob = list(bob_records)
    if len(alice) != len(bob):
        raise ValidationError("transmitter and receiver record counts differ")
    if n_pulses is not None and n_pulses < len(alice):
        raise ValidationError("n_pulses cannot undercount the supplied records")
    tally = _Tally()
    tally.n_pulses = len(alice) if n_pulses is None else int(n_pulses)
    for (slot_a, basis, bit), (slot_b, detections) in zip(alice, bob):
        if slot_a != slot_b:
            raise ValidationError(f"slot mismatch: {slot_a} vs {slot_b}")
        if basis not in BASIS_STATES:
            raise ValidationError(f"unknown basis label {basis!r}")
        dets = tuple(detections)
        if not dets:
            continue
        tally.n_detections += 1
        if len(dets) > 1:
            _classify_multiclick(dets, basis, bit, policy, rng, tally)
            continue
        det = dets[0]
        idx = DETECTOR_ORDER.index(det)
        bob_basis = _DET_BASIS[idx]
        if bob_basis != basis:
            tally.n_mismatch += 1
            continue
        tally.kept[basis] += 1
        if _DET_BIT[idx] != bit:
            tally.errors[basis] += 1
    return tally.result(key_basis)


def prepare_pulse(alice: AliceSettings, rng: np.random.Generator) -> tuple[str, int]:
    """Draw one slot's basis label and bit (basis first, then bit)."""
    if alice.pattern is not None:
        basis_idx, bits = alice.pattern.take(1)
        return _BASIS_LABELS[int(basis_idx[0])], int(bits[0])
    basis = "DA" if rng.random() < _da_probability(alice) else "LR"
    return basis, int(rng.integers(0, 2))


def _da_probability(alice: AliceSettings, key_basis: str = "DA") -> float:
    return alice.p_key if key_basis == "DA" else alice.p_check


def transmit_and_measure(
    basis: str, bit: int, config: SessionConfig, rng: np.random.Generator, slot: int = 0
) -> SlotRecord:
    """Scalar single-slot reference path, kept independent of the array engine."""
    if basis not in BASIS_STATES:
        raise ValidationError(f"unknown basis label {basis!r}")
    if bit not in (0, 1):
        raise ValidationError("bit must be 0 or 1")
    state = PROTOCOL_STATES[BASIS_STATES[basis][bit]].vector
    p_surv = survival_probability(
        config.device, config.channel.loss_db, config.detection_scale
    )
    n_photons = sample_photon_number(config.stats, rng)
    clicks = set()
    for _ in range(n_photons):
        if rng.random() >= p_surv:
            continue
        lam = float(config.spectrum.sample(rng, 1)[0])
        out = apply_channel_rows(state[None, :], config.channel, [lam])[0]
        meas_basis = "DA" if rng.random() < config.bob_split else "LR"
        zero = stokes_of(BASIS_STATES[meas_basis][0])
        p_zero = 0.5 * (1.0 + out @ zero)
        meas_bit = 0 if rng.random() < p_zero else 1
        if rng.random() < config.device.intrinsic_error:
            meas_bit ^= 1
        clicks.add(BASIS_STATES[meas_basis][meas_bit])
    for det in DETECTOR_ORDER:
        if rng.random() < config.device.dark_prob:
            clicks.add(det)
    ordered = tuple(d for d in DETECTOR_ORDER if d in clicks)
    return SlotRecord(slot=slot, alice_basis=basis, alice_bit=bit, detections=ordered)


def run_session(
    config: SessionConfig,
    n_pulses: int,
    seed: int,
    record_slots: bool = False,
) -> SessionResult:
    """Simulate a session of ``n_pulses`` clock slots.

    Vectorized in chunks with a fixed per-chunk draw order (basis, bit,
    photon number, two arrival uniforms, wavelengths and measurement draws
    for first then second photons, dark counts, then double-click
    resolutions), so results are reproducible for a given seed. Only clicked
    slots are recorded when ``record_slots`` is on. Time windows cover
    ``config.window_s`` each; the trailing partial window is dropped.
    """
    if n_pulses < 1:
        raise ValidationError("need at least one pulse")
    rng = np.random.default_rng(seed)
    device = config.device
    p_surv = survival_probability(device, config.channel.loss_db, config.detection_scale)
    p_da = _da_probability(config.alice, config.key_basis)

    truncated = False
    pattern = config.alice.pattern
    if pattern is not None and pattern.remaining_pairs < n_pulses:
        n_pulses = pattern.remaining_pairs
        truncated = True
        if n_pulses == 0:
            raise PatternExhaustedError("pattern has no pairs left")

    window_pulses = int(round(config.window_s * device.rep_rate_hz))
    window_pulses = max(window_pulses, 1)
    n_windows = n_pulses // window_pulses
    win_sifted = np.zeros(n_windows, dtype=np.int64)
    win_errors = np.zeros(n_windows, dtype=np.int64)

    tally = _Tally()
    tally.n_pulses = n_pulses
    records: list[SlotRecord] = []

    zero_da = stokes_of("D")
    zero_lr = stokes_of("L")

    for start in range(0, n_pulses, _CHUNK):
        m = min(_CHUNK, n_pulses - start)
        if pattern is not None:
            basis_idx, bits = pattern.take(m)
        else:
            basis_idx = (rng.random(m) >= p_da).astype(np.int64)  # 0 = DA, 1 = LR
            bits = rng.integers(0, 2, size=m)
        n_photons = sample_photon_number(config.stats, rng, m)
        arrive1 = (rng.random(m) < p_surv) & (n_photons >= 1)
        arrive2 = (rng.random(m) < p_surv) & (n_photons >= 2)

        # state index 0..3 = D, A, L, R
        state_idx = np.where(basis_idx == 0, bits, 2 + bits)
        stokes_table = np.array(
            [PROTOCOL_STATES[lbl].vector for lbl in DETECTOR_ORDER]
        )

        clicks = np.zeros((m, 4), dtype=bool)
        for arrived in (arrive1, arrive2):
            idx = np.flatnonzero(arrived)
            if idx.size == 0:
                # Keep the draw order aligned across chunks regardless of
                # arrivals: zero-size draws consume nothing, which is fine
                # because the order only matters within what is drawn.
                continue
            lam = config.spectrum.sample(rng, idx.size)
            out = apply_channel_rows(stokes_table[state_idx[idx]], config.channel, lam)
            in_da = rng.random(idx.size) < config.bob_split
            p_zero = np.where(
                in_da, 0.5 * (1.0 + out @ zero_da), 0.5 * (1.0 + out @ zero_lr)
            )
            meas_bit = (rng.random(idx.size) >= p_zero).astype(np.int64)
            meas_bit ^= rng.random(idx.size) < device.intrinsic_error
            det = np.where(in_da, meas_bit, 2 + meas_bit)
            clicks[idx, det] = True

        if device.dark_prob > 0.0:
            clicks |= rng.random((m, 4)) < device.dark_prob

        n_clicks = clicks.sum(axis=1)
        clicked = np.flatnonzero(n_clicks > 0)
        tally.n_detections += int(clicked.size)

        single = np.flatnonzero(n_clicks == 1)
        det_single = np.argmax(clicks[single], axis=1)
        bob_basis_idx = det_single // 2
        match = bob_basis_idx == basis_idx[single]
        tally.n_mismatch += int(np.count_nonzero(~match))
        kept_slots = single[match]
        kept_det = det_single[match]
        kept_basis = kept_det // 2
        err = (kept_det % 2) != bits[kept_slots]
        for b, lbl in enumerate(_BASIS_LABELS):
            sel = kept_basis == b
            tally.kept[lbl] += int(np.count_nonzero(sel))
            tally.errors[lbl] += int(np.count_nonzero(err & sel))

        if n_windows > 0:
            win_idx = (start + kept_slots) // window_pulses
            in_win = win_idx < n_windows
            np.add.at(win_sifted, win_idx[in_win], 1)
            np.add.at(win_errors, win_idx[in_win], err[in_win].astype(np.int64))

        multi = np.flatnonzero(n_clicks > 1)
        multi_kept: list[tuple[int, int, bool]] = []
        for i in multi:
            dets = tuple(DETECTOR_ORDER[d] for d in np.flatnonzero(clicks[i]))
            before = dict(tally.kept)
            before_err = dict(tally.errors)
            _classify_multiclick(
                dets,
                _BASIS_LABELS[int(basis_idx[i])],
                int(bits[i]),
                config.double_click_policy,
                rng,
                tally,
            )
            if n_windows > 0:
                for lbl in _BASIS_LABELS:
                    dk = tally.kept[lbl] - before[lbl]
                    if dk:
                        de = tally.errors[lbl] - before_err[lbl]
                        multi_kept.append((start + int(i), dk, bool(de)))
        for slot, dk, had_err in multi_kept:
            w = slot // window_pulses
            if w < n_windows:
                win_sifted[w] += dk
                win_errors[w] += int(had_err)

        if record_slots:
            for i in clicked:
                dets = tuple(DETECTOR_ORDER[d] for d in np.flatnonzero(clicks[i]))
                records.append(
                    SlotRecord(
                        slot=start + int(i),
                        alice_basis=_BASIS_LABELS[int(basis_idx[i])],
                        alice_bit=int(bits[i]),
                        detections=dets,
                    )
                )

    windows = tuple(
        WindowStat(
            index=i,
            n_sifted=int(win_sifted[i]),
            n_errors=int(win_errors[i]),
            window_s=config.window_s,
        )
        for i in range(n_windows)
    )
    return SessionResult(
        sift=tally.result(config.key_basis),
        windows=windows,
        records=tuple(records) if record_slots else None,
        n_pulses=n_pulses,
        duration_s=n_pulses / device.rep_rate_hz,
        seed=seed,
        truncated=truncated,
    )


@dataclass(frozen=True)
class RateModel:
    """Closed-form per-slot probabilities and rates for one configuration."""

    p_survival: float
    p_signal_click: float
    p_det: float
    sift_da: float
    sift_lr: float
    qber_da: float
    qber_lr: float
    e_pol_da: float
    e_pol_lr: float
    sifted_fraction: float
    sifted_bps: float
    qber_pooled: float
    key_basis: str

    @property
    def sift_key(self) -> float:
        return self.sift_da if self.key_basis == "DA" else self.sift_lr

    @property
    def sift_check(self) -> float:
        return self.sift_lr if self.key_basis == "DA" else self.sift_da

    @property
    def e_key(self) -> float:
        return self.qber_da if self.key_basis == "DA" else self.qber_lr

    @property
    def e_check(self) -> float:
        return self.qber_lr if self.key_basis == "DA" else self.qber_da


def closed_form_rates(
    device: DeviceParams,
    stats: PhotonStatistics,
    channel_loss_db: float,
    rep_rate_hz: float | None = None,
    e_pol_da: float = 0.0,
    e_pol_lr: float = 0.0,
    p_da: float = 0.5,
    bob_split: float = 0.5,
    key_basis: str = "DA",
    detection_scale: float = 1.0,
) -> RateModel:
    """First-order detection, sifting and error model.

    Slots where both photons of a pair arrive are neglected beyond their
    contribution to the click probability; their weight relative to the
    sifted signal is of order p_multi * survival over p_single, below 1e-4
    for any configuration this package targets.
    """
    t = survival_probability(device, channel_loss_db, detection_scale)
    dark = device.dark_prob
    e0 = device.intrinsic_error
    s_click = stats.p_single * t + stats.p_multi * (1.0 - (1.0 - t) ** 2)
    p_det = 1.0 - (1.0 - s_click) * (1.0 - dark) ** 4

    quiet3 = (1.0 - dark) ** 3
    one_dark = 2.0 * dark * quiet3
    sift = {}
    err = {}
    for basis, p_basis, q_basis, e_pol in (
        ("DA", p_da, bob_split, e_pol_da),
        ("LR", 1.0 - p_da, 1.0 - bob_split, e_pol_lr),
    ):
        e_sig = e_pol * (1.0 - e0) + (1.0 - e_pol) * e0
        kept_sig = p_basis * q_basis * s_click * quiet3
        kept_dark = p_basis * (1.0 - s_click) * one_dark
        sift[basis] = kept_sig + kept_dark
        err[basis] = kept_sig * e_sig + kept_dark * 0.5

    qber = {b: err[b] / sift[b] if sift[b] > 0.0 else math.nan for b in sift}
    total = sift["DA"] + sift["LR"]
    pooled = (err["DA"] + err["LR"]) / total if total > 0.0 else math.nan
    nu = device.rep_rate_hz if rep_rate_hz is None else rep_rate_hz
    return RateModel(
        p_survival=t,
        p_signal_click=s_click,
        p_det=p_det,
        sift_da=sift["DA"],
        sift_lr=sift["LR"],
        qber_da=qber["DA"],
        qber_lr=qber["LR"],
        e_pol_da=e_pol_da,
        e_pol_lr=e_pol_lr,
        sifted_fraction=total,
        sifted_bps=total * nu,
        qber_pooled=pooled,
        key_basis=key_basis,
    )


def expected_rates(config: SessionConfig, n_qber_samples: int = 201) -> RateModel:
    """Closed-form rates for a full session configuration.

    Polarization error rates per basis come from the spectrally averaged
    channel misalignment of each basis state.
    """
    e_pol = {}
    for basis in _BASIS_LABELS:
        pair = BASIS_STATES[basis]
        values = [
            qber_from_pmd(
                PROTOCOL_STATES[lbl].vector, config.channel, config.spectrum, n_qber_samples
            )
            for lbl in pair
        ]
        e_pol[basis] = 0.5 * (values[0] + values[1])
    return closed_form_rates(
        device=config.device,
        stats=config.stats,
        channel_loss_db=config.channel.loss_db,
        e_pol_da=e_pol["DA"],
        e_pol_lr=e_pol["LR"],
        p_da=_da_probability(config.alice, config.key_basis),
        bob_split=config.bob_split,
        key_basis=config.key_basis,
        detection_scale=config.detection_scale,
    )
