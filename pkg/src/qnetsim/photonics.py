"""Phenomenological physical-layer model.

The models here are deliberately simple, calibratable forms whose few
coefficients are fitted to measured operating points rather than derived
from first principles:

- Path transmittance: eta = 10^(-loss_dB/10).
- In-band noise on a detection channel (counts/s):

      noise = raman_coeff * P_classical_mW * L_eff_km * filter_BW_GHz
              * detector_efficiency + dark_rate

  with the usual effective interaction length for scattered light,
  L_eff = (1 - 10^(-alpha*L/10)) / (alpha*ln10/10). The single
  ``raman_coeff`` absorbs the band-pair-specific scattering efficiency
  and is calibrated per direction (Stokes vs anti-Stokes are not assumed
  symmetric).

- Pair statistics for a source of rate R feeding two detection arms:

      singles_i    = R * eta_i * det_i + noise_i
      coincidences = R * (eta_1 * det_1) * (eta_2 * det_2)
      accidentals  = singles_1 * singles_2 * tau

  where tau is the coincidence window (the smaller of the two arms').
  CAR = coincidences / accidentals, with CAR = 0 by convention when
  there are no true coincidences.

- Two-photon-interference visibility with accidentals raising both the
  fringe maximum and minimum:

      V = S * V0 / (S + 2 * A)

  so V -> V0 as A -> 0 and V decreases monotonically with noise.

- Hong-Ou-Mandel coincidence dip, Gaussian in relative delay:

      C(delta) = C_far * (1 - V_HOM * exp(-(delta/tau_c)^2))

Four-wave mixing and amplifier ASE cross-talk into the quantum band are
modeled as exactly zero: with wide band separation and standard filtering
they are negligible next to Raman scattering.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import optimize


class PhotonicsError(Exception):
    pass


class NoFeasibleFit(PhotonicsError):
    """Observations cannot be explained by any nonnegative coefficient."""


class MetricEvaluationError(PhotonicsError):
    def __init__(self, sample_index: int, cause: Exception):
        super().__init__(f"metric failed at sample {sample_index}: {cause}")
        self.sample_index = sample_index
        self.cause = cause


def transmittance_from_loss_db(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def effective_length_km(attenuation_db_per_km: float, length_km: float) -> float:
    """Effective fiber length over which scattered noise accumulates."""
    if length_km <= 0:
        return 0.0
    if attenuation_db_per_km <= 0:
        return length_km
    alpha_lin = attenuation_db_per_km * math.log(10.0) / 10.0  # 1/km
    return (1.0 - 10.0 ** (-attenuation_db_per_km * length_km / 10.0)) / alpha_lin


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass
class EpsModel:
    """Entangled-pair source: generation rate, intrinsic fringe contrast,
    and the wavelength-output fan-out that bounds simultaneous users."""

    pair_rate_hz: float
    intrinsic_visibility: float = 1.0
    n_wavelength_outputs: int = 2
    rep_rate_hz: float = 417e6
    pulse_width_ps: float = 80.0
    # Per-basis intrinsic visibility overrides (e.g. {"hv": 0.90, "da": 0.88}).
    basis_visibility: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.intrinsic_visibility <= 1.0):
            raise ValueError("intrinsic_visibility must be in [0, 1]")
        if self.n_wavelength_outputs < 2 or self.n_wavelength_outputs % 2:
            raise ValueError("n_wavelength_outputs must be an even integer >= 2")
        for basis, v0 in self.basis_visibility.items():
            if not (0.0 <= v0 <= 1.0):
                raise ValueError(f"basis visibility {basis} out of [0, 1]")

    @property
    def max_user_pairs(self) -> int:
        return self.n_wavelength_outputs // 2

    def visibility_for_basis(self, basis: str | None) -> float:
        if basis and basis in self.basis_visibility:
            return self.basis_visibility[basis]
        return self.intrinsic_visibility


@dataclass
class ChannelModel:
    """One detection arm: everything between source output and detector."""

    transmittance: float = 1.0
    detector_efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    filter_bw_ghz: float = 100.0
    coincidence_window_s: float = 0.5e-9
    raman_coeff: float = 0.0  # counts/s per mW per km per GHz
    classical_power_mw: float = 0.0
    fiber_length_km: float = 0.0
    attenuation_db_per_km: float = 0.33

    def __post_init__(self) -> None:
        # Zero transmittance is allowed as the absorbing limit (dead arm).
        if not (0.0 <= self.transmittance <= 1.0):
            raise ValueError("transmittance must be in [0, 1]")
        if not (0.0 < self.detector_efficiency <= 1.0):
            raise ValueError("detector_efficiency must be in (0, 1]")
        if self.coincidence_window_s <= 0:
            raise ValueError("coincidence_window_s must be > 0")
        if self.dark_rate_hz < 0 or self.raman_coeff < 0 or self.classical_power_mw < 0:
            raise ValueError("rates, coefficients and powers must be >= 0")

    @classmethod
    def from_loss_db(cls, loss_db: float, **kwargs) -> "ChannelModel":
        return cls(transmittance=transmittance_from_loss_db(loss_db), **kwargs)

    @property
    def loss_db(self) -> float:
        if self.transmittance == 0.0:
            return math.inf
        return -10.0 * math.log10(self.transmittance)


@dataclass
class PhotonStatistics:
    singles_1_hz: float
    singles_2_hz: float
    coincidences_hz: float
    accidentals_hz: float
    car: float
    visibility: float
    uncertainties: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "singles_1_hz": self.singles_1_hz,
            "singles_2_hz": self.singles_2_hz,
            "coincidences_hz": self.coincidences_hz,
            "accidentals_hz": self.accidentals_hz,
            "car": self.car,
            "visibility": self.visibility,
        }
        if self.uncertainties:
            d["uncertainties"] = dict(sorted(self.uncertainties.items()))
        return d


@dataclass
class HomDipModel:
    baseline_rate_hz: float
    hom_visibility: float
    coherence_time_ps: float

    def __post_init__(self) -> None:
        if self.baseline_rate_hz < 0:
            raise ValueError("baseline_rate_hz must be >= 0")
        if not (0.0 <= self.hom_visibility <= 1.0):
            raise ValueError("hom_visibility must be in [0, 1]")
        if self.coherence_time_ps <= 0:
            raise ValueError("coherence_time_ps must be > 0")


def noise_rate(ch: ChannelModel) -> float:
    """In-band noise counts/s on one arm: scattered-light term plus darks.

    Linear in classical launch power and filter bandwidth; zero classical
    power leaves only the dark rate.
    """
    raman = (ch.raman_coeff * ch.classical_power_mw
             * effective_length_km(ch.attenuation_db_per_km, ch.fiber_length_km)
             * ch.filter_bw_ghz * ch.detector_efficiency)
    return raman + ch.dark_rate_hz


def _car(coincidences: float, accidentals: float) -> float:
    if coincidences <= 0.0:
        return 0.0
    if accidentals <= 0.0:
        return math.inf
    return coincidences / accidentals


def singles_and_coincidences(eps: EpsModel, ch1: ChannelModel, ch2: ChannelModel,
                             basis: str | None = None) -> PhotonStatistics:
    """Steady-state rates for one pair of detection arms."""
    eta1 = ch1.transmittance * ch1.detector_efficiency
    eta2 = ch2.transmittance * ch2.detector_efficiency
    s1 = eps.pair_rate_hz * eta1 + noise_rate(ch1)
    s2 = eps.pair_rate_hz * eta2 + noise_rate(ch2)
    coincidences = eps.pair_rate_hz * eta1 * eta2
    tau = min(ch1.coincidence_window_s, ch2.coincidence_window_s)
    accidentals = s1 * s2 * tau
    v0 = eps.visibility_for_basis(basis)
    return PhotonStatistics(
        singles_1_hz=s1,
        singles_2_hz=s2,
        coincidences_hz=coincidences,
        accidentals_hz=accidentals,
        car=_car(coincidences, accidentals),
        visibility=visibility_from_rates(coincidences, accidentals, v0),
    )


def visibility_from_rates(true_rate: float, accidental_rate: float, v0: float) -> float:
    """Fringe visibility degraded by accidentals: V = S*V0 / (S + 2A)."""
    if true_rate <= 0.0:
        return 0.0
    return true_rate * v0 / (true_rate + 2.0 * accidental_rate)


def visibility(eps: EpsModel, stats: PhotonStatistics, basis: str | None = None) -> float:
    return visibility_from_rates(stats.coincidences_hz, stats.accidentals_hz,
                                 eps.visibility_for_basis(basis))


NONCLASSICAL_VISIBILITY_BOUND = 1.0 / math.sqrt(2.0)
CLASSICAL_FIDELITY_BOUND = 2.0 / 3.0


class VisibilityClass(str, enum.Enum):
    NON_CLASSICAL = "non_classical"
    CLASSICAL = "classical"


class FidelityClass(str, enum.Enum):
    ABOVE_CLASSICAL = "above_classical"
    NOT_ABOVE_CLASSICAL = "not_above_classical"


def classify_nonclassical(v: float) -> VisibilityClass:
    """Strictly above 1/sqrt(2) counts as non-classical; the boundary
    itself does not."""
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"visibility {v} out of [0, 1]")
    if v > NONCLASSICAL_VISIBILITY_BOUND:
        return VisibilityClass.NON_CLASSICAL
    return VisibilityClass.CLASSICAL


def teleportation_bound_check(fidelity: float) -> FidelityClass:
    """Strictly above 2/3 beats the classical strategy; the boundary does not."""
    if not (0.0 <= fidelity <= 1.0):
        raise ValueError(f"fidelity {fidelity} out of [0, 1]")
    if fidelity > CLASSICAL_FIDELITY_BOUND:
        return FidelityClass.ABOVE_CLASSICAL
    return FidelityClass.NOT_ABOVE_CLASSICAL


def hom_coincidence_rate(model: HomDipModel, delay_ps: float) -> float:
    x = delay_ps / model.coherence_time_ps
    return model.baseline_rate_hz * (1.0 - model.hom_visibility * math.exp(-x * x))


def poisson_mc_uncertainty(counts: Mapping[str, int],
                           metric: Callable[[dict[str, float]], float],
                           n_samples: int,
                           rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard deviation of ``metric`` under Poisson resampling.

    Each count is replaced by an independent Poisson variate of that mean
    and the metric re-evaluated, n_samples times. Deterministic for a
    given generator state.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100 for a usable std estimate")
    labels = sorted(counts)
    for lbl in labels:
        if counts[lbl] < 0:
            raise ValueError(f"count {lbl} must be >= 0")
    means = np.array([counts[lbl] for lbl in labels], dtype=float)
    draws = rng.poisson(means, size=(n_samples, len(labels)))
    values = np.empty(n_samples, dtype=float)
    for i in range(n_samples):
        sample = {lbl: float(draws[i, j]) for j, lbl in enumerate(labels)}
        try:
            values[i] = metric(sample)
        except Exception as exc:
            raise MetricEvaluationError(i, exc) from exc
    return float(values.mean()), float(values.std(ddof=1))


def attach_poisson_uncertainties(stats: PhotonStatistics, v0: float,
                                 integration_s: float, n_samples: int,
                                 rng: np.random.Generator) -> PhotonStatistics:
    """Fill per-field standard deviations by Poisson-resampling the
    counts accumulated over the integration time.

    Singles and coincidence counts are redrawn jointly; accidentals, CAR
    and visibility are recomputed per draw so their spreads carry the
    correlations of the shared counts.
    """
    if integration_s <= 0:
        raise ValueError("integration_s must be > 0")
    if stats.singles_1_hz <= 0 or stats.singles_2_hz <= 0:
        raise ValueError("singles rates must be > 0 to resample")
    tau_eff = stats.accidentals_hz / (stats.singles_1_hz * stats.singles_2_hz)
    means = np.array([stats.singles_1_hz, stats.singles_2_hz,
                      stats.coincidences_hz]) * integration_s
    draws = rng.poisson(means, size=(n_samples, 3)) / integration_s
    s1, s2, coinc = draws[:, 0], draws[:, 1], draws[:, 2]
    acc = s1 * s2 * tau_eff
    with np.errstate(divide="ignore", invalid="ignore"):
        car = np.where(acc > 0, coinc / np.where(acc > 0, acc, 1.0), 0.0)
    vis = np.where(coinc > 0, coinc * v0 / (coinc + 2.0 * acc), 0.0)
    uncertainties = {
        "singles_1_hz": float(s1.std(ddof=1)),
        "singles_2_hz": float(s2.std(ddof=1)),
        "coincidences_hz": float(coinc.std(ddof=1)),
        "accidentals_hz": float(acc.std(ddof=1)),
        "car": float(car.std(ddof=1)),
        "visibility": float(vis.std(ddof=1)),
    }
    return replace(stats, uncertainties=uncertainties)


def _predicted_metric(coeff: float, power_mw: float, eps: EpsModel,
                      ch_noisy: ChannelModel, ch_ref: ChannelModel,
                      metric: str) -> float:
    ch = replace(ch_noisy, raman_coeff=coeff, classical_power_mw=power_mw)
    stats = singles_and_coincidences(eps, ch, ch_ref)
    if metric == "car":
        return stats.car
    if metric == "visibility":
        return stats.visibility
    raise ValueError(f"unknown calibration metric {metric!r}")


def calibrate_raman(observations: list[tuple[float, float]], eps: EpsModel,
                    ch_noisy: ChannelModel, ch_ref: ChannelModel,
                    metric: str = "car") -> float:
    """Fit the scattered-noise coefficient to measured operating points.

    ``observations`` are (classical_power_mw, observed_value) pairs where
    the value is a CAR or a visibility per ``metric``. The predicted
    metric is strictly decreasing in the coefficient at any positive
    power, so a single observation pins the coefficient exactly; multiple
    observations are combined by least squares.

    Raises NoFeasibleFit when no nonnegative coefficient can explain the
    data: all observations at zero power (coefficient unconstrained), or
    an observed value above the zero-noise prediction.
    """
    if not observations:
        raise ValueError("need at least one observation")
    informative = [(p, v) for p, v in observations if p > 0.0]
    if not informative:
        raise NoFeasibleFit("all observations at zero classical power; "
                            "coefficient is unconstrained")

    def predict(coeff: float, power: float) -> float:
        return _predicted_metric(coeff, power, eps, ch_noisy, ch_ref, metric)

    if len(informative) == 1:
        power, observed = informative[0]
        zero = predict(0.0, power)
        if observed > zero:
            raise NoFeasibleFit(
                f"observed {metric} {observed} exceeds the zero-noise "
                f"prediction {zero}")
        if observed == zero:
            return 0.0
        hi = 1.0
        while predict(hi, power) > observed:
            hi *= 10.0
            if hi > 1e15:
                raise NoFeasibleFit("no coefficient reaches the observed value")
        return float(optimize.brentq(
            lambda c: predict(c, power) - observed, 0.0, hi,
            xtol=1e-15, rtol=1e-14))

    def sse(coeff: float) -> float:
        return sum((predict(coeff, p) - v) ** 2 for p, v in informative)

    if all(predict(0.0, p) < v for p, v in informative):
        raise NoFeasibleFit("all observations above the zero-noise prediction")
    hi = 1.0
    while any(predict(hi, p) > v for p, v in informative):
        hi *= 10.0
        if hi > 1e15:
            break
    res = optimize.minimize_scalar(sse, bounds=(0.0, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x)
