"""Simulated calibration procedures scheduled by the control plane.

Polarization alignment works against a Jones-matrix model of the channel:
an unknown birefringent fiber unitary followed by the receiver's
compensator (quarter-wave plate, half-wave plate, liquid-crystal
retarder). Two classical alignment signals are used in sequence:

1. A vertically polarized signal. The receiver rotates the QWP/HWP pair
   to extinguish the counts behind the horizontal analyzer port, which
   pins the H/V axes up to a relative phase.
2. A diagonal signal carrying the source's H/V relative phase. With the
   projection half-wave plate at 22.5 degrees the reflected analyzer
   port measures the anti-diagonal component; scanning the retarder
   phase to extinguish it zeroes the arriving relative phase.

Two non-orthogonal signals are necessary: the first stage alone leaves a
one-parameter phase family uncompensated, which the second collapses.

Time-bin receivers locate the early/late bins from burst histograms, and
interfering-photon delay is tuned by scanning a Hong-Ou-Mandel dip.
Correlation delay between two receivers is found by scanning an integer
electrical delay until coincidences significantly exceed the accidental
baseline, then verifying the candidate with a second round of counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .photonics import HomDipModel, hom_coincidence_rate


class CalibrationError(Exception):
    pass


class ConvergenceFailure(CalibrationError):
    pass


class PeaksUnresolved(CalibrationError):
    pass


class FitFailure(CalibrationError):
    pass


class NotFound(CalibrationError):
    pass


# -- Jones formalism --------------------------------------------------------

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_D = (KET_H + KET_V) / math.sqrt(2.0)
KET_A = (KET_H - KET_V) / math.sqrt(2.0)


def rotation(theta_rad: float) -> np.ndarray:
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    return np.array([[c, -s], [s, c]], dtype=complex)


def waveplate(theta_rad: float, retardance_rad: float) -> np.ndarray:
    """Linear retarder with fast axis at theta."""
    r = rotation(theta_rad)
    m = np.array([[1.0, 0.0], [0.0, np.exp(-1j * retardance_rad)]], dtype=complex)
    return r @ m @ r.T


def hwp(theta_rad: float) -> np.ndarray:
    return waveplate(theta_rad, math.pi)


def qwp(theta_rad: float) -> np.ndarray:
    return waveplate(theta_rad, math.pi / 2.0)


def retarder_phase(phase_rad: float) -> np.ndarray:
    """Liquid-crystal retarder at zero degrees: pure H/V relative phase."""
    return np.array([[1.0, 0.0], [0.0, np.exp(-1j * phase_rad)]], dtype=complex)


def random_su2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random SU(2) via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    return np.array([[a + 1j * b, c + 1j * d],
                     [-c + 1j * d, a - 1j * b]], dtype=complex)


def project_to_unitary(m: np.ndarray) -> np.ndarray:
    """Nearest unitary by polar decomposition (drift renormalization)."""
    u, _, vh = np.linalg.svd(m)
    return u @ vh


@dataclass
class CompensatorSettings:
    qwp_deg: float = 0.0
    hwp_deg: float = 0.0
    lcr_phase_rad: float = 0.0

    def matrix(self) -> np.ndarray:
        # Light traverses QWP, then HWP, then the retarder.
        return (retarder_phase(self.lcr_phase_rad)
                @ hwp(math.radians(self.hwp_deg))
                @ qwp(math.radians(self.qwp_deg)))


@dataclass
class PolarizationChannelState:
    """One fiber channel's polarization transfer plus its compensator."""

    fiber_unitary: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    compensator: CompensatorSettings = field(default_factory=CompensatorSettings)
    drift_rate_rad_per_s: float = 0.0

    def composed(self) -> np.ndarray:
        return self.compensator.matrix() @ self.fiber_unitary

    def drift(self, dt_s: float, rng: np.random.Generator) -> None:
        """Random-walk birefringence drift, renormalized to stay unitary."""
        if self.drift_rate_rad_per_s <= 0.0 or dt_s <= 0.0:
            return
        angle = self.drift_rate_rad_per_s * math.sqrt(dt_s)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        nx, ny, nz = axis * (angle * rng.normal())
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        gen = -1j * (nx * sx + ny * sy + nz * sz) / 2.0
        step = np.eye(2, dtype=complex) + gen + gen @ gen / 2.0
        self.fiber_unitary = project_to_unitary(step @ self.fiber_unitary)


class SignalKind:
    V_ALIGN = "v_align"
    DIAG_ALIGN = "diag_align"


@dataclass
class AlignmentSignal:
    kind: str
    power: float = 1.0
    phase_eps_rad: float = 0.0

    def jones(self) -> np.ndarray:
        if self.kind == SignalKind.V_ALIGN:
            return KET_V.copy()
        if self.kind == SignalKind.DIAG_ALIGN:
            return (KET_H + np.exp(1j * self.phase_eps_rad) * KET_V) / math.sqrt(2.0)
        raise ValueError(f"unknown alignment signal {self.kind!r}")


def singles_rate_for_projection(signal: AlignmentSignal,
                                channel: PolarizationChannelState,
                                projector: np.ndarray) -> float:
    """Detected rate (relative units) behind a polarization projector."""
    amp = np.vdot(projector, channel.composed() @ signal.jones())
    return float(signal.power * np.abs(amp) ** 2)


# Analyzer chain for the phase stage: projection HWP at 22.5 degrees,
# detector on the reflected (V) analyzer port, i.e. an |A> projection.
_PHASE_STAGE_PROJECTOR = hwp(math.radians(22.5)).conj().T @ KET_V


@dataclass
class AlignmentSearchConfig:
    coarse_points: int = 24
    golden_tol_rad: float = 1e-4
    sweeps: int = 3
    fail_threshold: float = 1e-3
    max_iterations: int = 20000


@dataclass
class AlignmentReport:
    residual_infidelity: float
    iterations: int
    final_compensator: CompensatorSettings

    def to_dict(self) -> dict:
        return {
            "residual_infidelity": self.residual_infidelity,
            "iterations": self.iterations,
            "compensator": {
                "qwp_deg": self.final_compensator.qwp_deg,
                "hwp_deg": self.final_compensator.hwp_deg,
                "lcr_phase_rad": self.final_compensator.lcr_phase_rad,
            },
        }


def _golden_minimize(f: Callable[[float], float], lo: float, hi: float,
                     tol: float) -> tuple[float, int]:
    """Golden-section minimize on [lo, hi]; returns (argmin, evaluations)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        n += 1
    x = (a + b) / 2.0
    return x, n + 1


def scan_then_golden(f: Callable[[float], float], lo: float, hi: float,
                      points: int, tol: float) -> tuple[float, int]:
    """Coarse grid to bracket the global minimum, then golden refine.

    The single-parameter objectives here are sinusoidal, so a coarse scan
    is needed to land in the right basin before golden section applies.
    """
    xs = np.linspace(lo, hi, points, endpoint=False)
    vals = [f(float(x)) for x in xs]
    i = int(np.argmin(vals))
    span = (hi - lo) / points
    x, n = _golden_minimize(f, float(xs[i]) - span, float(xs[i]) + span, tol)
    return x, n + points


def _scan2d(f: Callable[[float, float], float], lo: float, hi: float,
            points: int) -> tuple[float, float, int]:
    """Coarse joint scan over two angles; picks the global basin that
    coordinate-wise refinement would otherwise miss on coupled fringes."""
    xs = np.linspace(lo, hi, points, endpoint=False)
    best = (math.inf, 0.0, 0.0)
    for a in xs:
        for b in xs:
            v = f(float(a), float(b))
            if v < best[0]:
                best = (v, float(a), float(b))
    return best[1], best[2], points * points


def align_polarization(channel: PolarizationChannelState, phase_eps_rad: float,
                       cfg: AlignmentSearchConfig | None = None,
                       two_stage: bool = True) -> AlignmentReport:
    """Two-stage basis alignment against the channel's current fiber state.

    Stage 1 (H/V): vertical signal in, minimize the horizontal analyzer
    counts over the QWP/HWP angles. Stage 2 (phase): diagonal signal in,
    projection HWP at 22.5 degrees, minimize the anti-diagonal counts
    over the retarder phase. The residual reported is the worst-case
    infidelity of the compensated channel on both alignment states.

    ``two_stage=False`` stops after the H/V stage and reports the
    residual without raising; it exists to quantify how underdetermined a
    single alignment signal leaves the channel.
    """
    cfg = cfg or AlignmentSearchConfig()
    v_sig = AlignmentSignal(SignalKind.V_ALIGN)
    d_sig = AlignmentSignal(SignalKind.DIAG_ALIGN, phase_eps_rad=phase_eps_rad)
    evals = 0

    def stage1(qwp_deg: float, hwp_deg: float) -> float:
        trial = PolarizationChannelState(
            fiber_unitary=channel.fiber_unitary,
            compensator=CompensatorSettings(qwp_deg, hwp_deg,
                                            channel.compensator.lcr_phase_rad))
        return singles_rate_for_projection(v_sig, trial, KET_H)

    q, h, n0 = _scan2d(stage1, 0.0, 180.0, cfg.coarse_points)
    evals += n0
    width = 180.0 / cfg.coarse_points
    for _ in range(cfg.sweeps):
        q, n1 = _golden_minimize(lambda x: stage1(x, h), q - width, q + width,
                                 math.degrees(cfg.golden_tol_rad))
        h, n2 = _golden_minimize(lambda x: stage1(q, x), h - width, h + width,
                                 math.degrees(cfg.golden_tol_rad))
        evals += n1 + n2
        if evals > cfg.max_iterations:
            break
    # Coordinate sweeps stall in diagonal valleys of the coupled (q, h)
    # surface; a joint derivative-free polish finishes the extinction.
    res = optimize.minimize(lambda x: stage1(x[0], x[1]), [q, h],
                            method="Nelder-Mead",
                            options={"xatol": math.degrees(cfg.golden_tol_rad) * 1e-2,
                                     "fatol": 1e-14, "maxfev": 400})
    q, h = float(res.x[0]), float(res.x[1])
    evals += int(res.nfev)
    channel.compensator.qwp_deg = q
    channel.compensator.hwp_deg = h

    if not two_stage:
        return AlignmentReport(
            residual_infidelity=alignment_residual(channel, phase_eps_rad),
            iterations=evals, final_compensator=channel.compensator)

    def stage2(lcr_phase: float) -> float:
        trial = PolarizationChannelState(
            fiber_unitary=channel.fiber_unitary,
            compensator=CompensatorSettings(q, h, lcr_phase))
        return singles_rate_for_projection(d_sig, trial, _PHASE_STAGE_PROJECTOR)

    phi, n3 = scan_then_golden(stage2, 0.0, 2.0 * math.pi,
                                cfg.coarse_points, cfg.golden_tol_rad)
    evals += n3
    channel.compensator.lcr_phase_rad = phi

    residual = alignment_residual(channel, phase_eps_rad)
    if residual > cfg.fail_threshold:
        raise ConvergenceFailure(
            f"alignment residual {residual:.2e} above {cfg.fail_threshold:.0e} "
            f"after {evals} evaluations")
    return AlignmentReport(residual_infidelity=residual, iterations=evals,
                           final_compensator=channel.compensator)


def alignment_residual(channel: PolarizationChannelState,
                       phase_eps_rad: float) -> float:
    """Worst infidelity over the two alignment states.

    The vertical signal should arrive vertical; the diagonal signal
    (which carries the source phase) should arrive as |D>, i.e. with the
    relative phase zeroed.
    """
    u = channel.composed()
    v_sig = AlignmentSignal(SignalKind.V_ALIGN).jones()
    d_sig = AlignmentSignal(SignalKind.DIAG_ALIGN,
                            phase_eps_rad=phase_eps_rad).jones()
    f_v = np.abs(np.vdot(KET_V, u @ v_sig)) ** 2
    f_d = np.abs(np.vdot(KET_D, u @ d_sig)) ** 2
    return float(max(1.0 - f_v, 1.0 - f_d))


def unitarity_defect(m: np.ndarray) -> float:
    return float(np.linalg.norm(m.conj().T @ m - np.eye(2)))


# -- time-bin ----------------------------------------------------------------

@dataclass
class TimeBinFrame:
    early_offset_ps: float
    late_offset_ps: float
    bin_width_ps: float
    interferometer_phase_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.late_offset_ps <= self.early_offset_ps:
            raise ValueError("late bin must come after early bin")
        if (self.late_offset_ps - self.early_offset_ps) < self.bin_width_ps:
            raise ValueError("bins overlap")

    @property
    def middle_offset_ps(self) -> float:
        # Interference bin, taken as the early/late midpoint.
        return (self.early_offset_ps + self.late_offset_ps) / 2.0


def align_timebin(offsets_ps: Sequence[float], counts: Sequence[int],
                  bin_width_ps: float,
                  min_separation_bins: float = 3.0) -> TimeBinFrame:
    """Locate early/late bins as the centroids of the two burst peaks.

    The histogram must contain two clusters separated by more than
    ``min_separation_bins`` bin widths, otherwise PeaksUnresolved.
    """
    offsets = np.asarray(offsets_ps, dtype=float)
    cnt = np.asarray(counts, dtype=float)
    if offsets.shape != cnt.shape or offsets.size == 0:
        raise ValueError("offsets and counts must be equal-length, nonempty")
    if cnt.max() <= 0:
        raise PeaksUnresolved("empty histogram")
    threshold = cnt.max() * 0.1
    above = cnt >= threshold
    clusters: list[tuple[int, int]] = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            clusters.append((start, i))
            start = None
    if start is not None:
        clusters.append((start, len(above)))
    clusters.sort(key=lambda se: -cnt[se[0]:se[1]].sum())
    if len(clusters) < 2:
        raise PeaksUnresolved(f"found {len(clusters)} burst(s), need 2")
    (a0, a1), (b0, b1) = sorted(clusters[:2])

    def centroid(s: int, e: int) -> float:
        w = cnt[s:e]
        return float((offsets[s:e] * w).sum() / w.sum())

    early, late = centroid(a0, a1), centroid(b0, b1)
    if (late - early) <= min_separation_bins * bin_width_ps:
        raise PeaksUnresolved(
            f"peaks {late - early:.1f} ps apart; need > "
            f"{min_separation_bins * bin_width_ps:.1f} ps")
    return TimeBinFrame(early_offset_ps=early, late_offset_ps=late,
                        bin_width_ps=bin_width_ps)


# -- HOM scan ----------------------------------------------------------------

@dataclass
class HomScanResult:
    best_delay_ps: float
    fitted_visibility: float
    fitted_coherence_ps: float
    fitted_baseline: float


def scan_hom(dip: HomDipModel, delay_grid_ps: Sequence[float],
             counts_per_point: int,
             rng: np.random.Generator | None = None) -> HomScanResult:
    """Scan the dip, fit the Gaussian profile, return delay and visibility.

    ``counts_per_point`` is the expected baseline count far from the dip;
    with ``rng`` set, per-point counts are Poisson draws, otherwise exact
    expectation values are used.
    """
    grid = np.asarray(delay_grid_ps, dtype=float)
    if grid.size < 5:
        raise FitFailure("need at least 5 scan points")
    expected = np.array([
        counts_per_point * hom_coincidence_rate(dip, d) / dip.baseline_rate_hz
        for d in grid])
    observed = rng.poisson(expected).astype(float) if rng is not None else expected

    top = float(observed.max())
    bottom = float(observed.min())
    if top <= 0 or (top - bottom) < 3.0 * math.sqrt(max(top, 1.0)):
        raise FitFailure("no dip resolved above the Poisson noise floor")

    def model(d, base, vis, center, tau):
        return base * (1.0 - vis * np.exp(-((d - center) / tau) ** 2))

    span = float(grid.max() - grid.min())
    p0 = [top, 1.0 - bottom / top, float(grid[int(np.argmin(observed))]), span / 6.0]
    try:
        popt, _ = optimize.curve_fit(
            model, grid, observed, p0=p0,
            bounds=([0.0, 0.0, float(grid.min()) - span, 1e-9],
                    [np.inf, 1.5, float(grid.max()) + span, 10.0 * span]),
            maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitFailure(f"dip fit did not converge: {exc}") from exc
    base, vis, center, tau = (float(x) for x in popt)
    if not (grid.min() <= center <= grid.max()):
        raise FitFailure(f"fitted dip center {center:.1f} ps outside the scan grid")
    return HomScanResult(best_delay_ps=center, fitted_visibility=min(vis, 1.0),
                         fitted_coherence_ps=tau, fitted_baseline=base)


# -- correlation delay search -------------------------------------------------

@dataclass
class DelayOracle:
    """Counting interface the delay scan drives.

    ``counts(delay, duration_s)`` returns the coincidences accumulated at
    an electrical delay setting; the true delay adds the signal rate on
    top of the accidental baseline.
    """

    true_delay: int
    signal_rate_hz: float
    accidental_rate_hz: float
    rng: np.random.Generator

    def counts(self, delay: int, duration_s: float) -> int:
        rate = self.accidental_rate_hz
        if delay == self.true_delay:
            rate += self.signal_rate_hz
        return int(self.rng.poisson(rate * duration_s))


@dataclass
class DelaySearchResult:
    delay: int
    coincidences_used: int
    verified_excess: float
    passes: int
    integration_s: float = 0.0


def find_correlation_delay(search_range: Sequence[int], oracle: DelayOracle,
                           confirm_counts: int = 10,
                           min_excess_ratio: float = 2.0,
                           max_passes: int = 2) -> DelaySearchResult:
    """Scan integer delays for heightened correlations, then verify.

    Each candidate delay is integrated long enough to expect
    ``confirm_counts`` signal coincidences. A candidate is accepted when
    its counts exceed the accidental baseline by at least 3 sigma AND by
    ``min_excess_ratio`` times the baseline, and a second, independent
    round of counts confirms the same test. If a full pass over the range
    finds nothing, the integration time is doubled and the scan repeated
    (up to ``max_passes``), after which NotFound is raised.
    """
    if oracle.signal_rate_hz <= 0:
        raise ValueError("expected signal rate must be > 0")
    delays = list(search_range)
    if not delays:
        raise ValueError("empty search range")

    def threshold(baseline_mean: float) -> float:
        return baseline_mean + max(3.0 * math.sqrt(baseline_mean),
                                   min_excess_ratio * baseline_mean, 1.0)

    spent_s = 0.0
    for attempt in range(max_passes):
        duration = (confirm_counts / oracle.signal_rate_hz) * (2.0 ** attempt)
        baseline_mean = oracle.accidental_rate_hz * duration
        gate = threshold(baseline_mean)
        for delay in delays:
            first = oracle.counts(delay, duration)
            spent_s += duration
            if first <= gate:
                continue
            confirm = oracle.counts(delay, duration)
            spent_s += duration
            if confirm <= gate:
                continue  # quick look was a fluke; keep scanning
            excess = confirm - baseline_mean
            if excess < 3.0 * math.sqrt(max(baseline_mean, 1e-12)):
                continue
            return DelaySearchResult(delay=delay,
                                     coincidences_used=first + confirm,
                                     verified_excess=float(excess),
                                     passes=attempt + 1,
                                     integration_s=spent_s)
    raise NotFound(f"no delay in [{delays[0]}, {delays[-1]}] showed verified "
                   f"correlations after {max_passes} passes")


# -- clock distribution --------------------------------------------------------

@dataclass
class ClockModel:
    oscillator_jitter_fs: float = 700.0
    distribution_jitter_ps: float = 0.0
    clock_rate_hz: float = 200e6
    clock_power_mw: float = 0.0

    def __post_init__(self) -> None:
        if self.oscillator_jitter_fs < 0 or self.distribution_jitter_ps < 0:
            raise ValueError("jitters must be >= 0")


def clock_jitter_budget(clock: ClockModel,
                        extra_components_ps: Sequence[float] = ()) -> float:
    """Total timing jitter in ps: root-sum-square of all contributions."""
    parts = [clock.oscillator_jitter_fs / 1000.0, clock.distribution_jitter_ps]
    for j in extra_components_ps:
        if j < 0:
            raise ValueError("jitter components must be >= 0")
        parts.append(j)
    return math.sqrt(sum(p * p for p in parts))


def swap_fidelity_estimate(hom_visibility: float) -> float:
    """Default pluggable estimate of attainable swap/teleport fidelity
    from photon indistinguishability; a repo convention, replaceable."""
    return (1.0 + hom_visibility) / 2.0
