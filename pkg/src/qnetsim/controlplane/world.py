"""Ground-truth physical layer the simulated agents measure against.

The world owns what no real control plane can see directly: the fiber
unitaries, the true correlation delays, the noise environment. Agents
only ever get what an instrument would return (counts, powers), drawn
from seeded RNG streams so runs replay exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .. import calibration as cal
from ..photonics import (
    ChannelModel,
    EpsModel,
    HomDipModel,
    VisibilityClass,
    classify_nonclassical,
    dbm_to_mw,
    noise_rate,
    singles_and_coincidences,
    visibility_from_rates,
)
from ..rwa import Lightpath
from ..simkernel import Engine
from ..topology import NetworkGraph


@dataclass
class DetectionChannelParams:
    detector_efficiency: float = 0.3
    dark_rate_hz: float = 100.0
    filter_bw_ghz: float = 100.0
    coincidence_window_s: float = 0.5e-9
    raman_coeff: float = 0.0

    def to_dict(self) -> dict:
        return {
            "detector_efficiency": self.detector_efficiency,
            "dark_rate_hz": self.dark_rate_hz,
            "filter_bw_ghz": self.filter_bw_ghz,
            "coincidence_window_s": self.coincidence_window_s,
            "raman_coeff": self.raman_coeff,
        }


@dataclass
class EpsParams:
    pair_rate_hz: float = 5.0e6
    intrinsic_visibility: float = 0.90
    basis_visibility: dict[str, float] = field(default_factory=dict)
    rep_rate_hz: float = 417e6
    pulse_width_ps: float = 80.0
    hom_visibility: float = 0.90
    hom_coherence_ps: float = 40.0

    def eps_model(self, n_outputs: int) -> EpsModel:
        return EpsModel(pair_rate_hz=self.pair_rate_hz,
                        intrinsic_visibility=self.intrinsic_visibility,
                        n_wavelength_outputs=max(n_outputs, 2),
                        rep_rate_hz=self.rep_rate_hz,
                        pulse_width_ps=self.pulse_width_ps,
                        basis_visibility=dict(self.basis_visibility))


@dataclass
class CoexistenceParams:
    classical_power_dbm: float | None = None
    raman_coeff: float = 0.0
    links: list[str] | None = None  # None means every link carries it

    @property
    def classical_power_mw(self) -> float:
        if self.classical_power_dbm is None:
            return 0.0
        return dbm_to_mw(self.classical_power_dbm)

    def applies_to(self, link_id: str) -> bool:
        return self.links is None or link_id in self.links


@dataclass
class ModelParams:
    channels: dict[str, DetectionChannelParams] = field(default_factory=dict)
    eps: dict[str, EpsParams] = field(default_factory=dict)
    coexistence: CoexistenceParams | None = None
    drift_rate_rad_per_s: float = 0.0
    timebin_early_ps: float = 400.0
    timebin_late_ps: float = 1400.0
    timebin_jitter_ps: float = 40.0

    def channel_params(self, node_id: str) -> DetectionChannelParams:
        return self.channels.get(node_id, DetectionChannelParams())

    def eps_params(self, eps_id: str) -> EpsParams:
        return self.eps.get(eps_id, EpsParams())


@dataclass
class _PairChannels:
    """Cached per-request physics: detection arms and polarization state."""

    eps_model: EpsModel
    arms: dict[str, ChannelModel]
    pol: dict[str, cal.PolarizationChannelState]
    phase_eps: float = 0.0
    last_drift_ns: int = 0


class PhysicsWorld:
    def __init__(self, graph: NetworkGraph, params: ModelParams, engine: Engine):
        self.graph = graph
        self.params = params
        self.engine = engine
        self._pair_cache: dict[str, _PairChannels] = {}
        # Scenario fault hooks.
        self.verification_faults: dict[str, int] = {}
        self.offline_at: dict[str, float] = {}
        self._true_delays: dict[str, int] = {}

    # -- channel construction -------------------------------------------

    def channel_model(self, lightpath: Lightpath, node_id: str) -> ChannelModel:
        chp = self.params.channel_params(node_id)
        coex = self.params.coexistence
        classical_mw = 0.0
        exposed_km = 0.0
        atten = 0.33
        links = lightpath.links(self.graph)
        if links:
            band = lightpath.channel.band
            atten = sum(l.attenuation_db_per_km.get(band, 0.33) for l in links) / len(links)
        if coex is not None and coex.classical_power_mw > 0.0:
            for link in links:
                if coex.applies_to(link.id):
                    exposed_km += link.length_km
            if exposed_km > 0.0:
                classical_mw = coex.classical_power_mw
        raman = coex.raman_coeff if (coex and classical_mw > 0.0) else chp.raman_coeff
        return ChannelModel(
            transmittance=10.0 ** (-lightpath.total_loss_db / 10.0),
            detector_efficiency=chp.detector_efficiency,
            dark_rate_hz=chp.dark_rate_hz,
            filter_bw_ghz=chp.filter_bw_ghz,
            coincidence_window_s=chp.coincidence_window_s,
            raman_coeff=raman,
            classical_power_mw=classical_mw,
            fiber_length_km=exposed_km,
            attenuation_db_per_km=atten,
        )

    def pair_channels(self, request_id: str, eps_id: str,
                      lightpaths: dict[str, Lightpath],
                      node_pair: tuple[str, str]) -> _PairChannels:
        cached = self._pair_cache.get(request_id)
        if cached is not None:
            return cached
        eps_node = self.graph.node(eps_id)
        model = self.params.eps_params(eps_id).eps_model(eps_node.wavelength_outputs)
        arms = {}
        pol = {}
        for node_id in node_pair:
            lp = lightpaths[f"quantum:{node_id}"]
            arms[node_id] = self.channel_model(lp, node_id)
            pol[node_id] = self.polarization_channel(eps_id, node_id)
        pair = _PairChannels(eps_model=model, arms=arms, pol=pol,
                             phase_eps=self.source_phase(eps_id),
                             last_drift_ns=self.engine.now_ns)
        self._pair_cache[request_id] = pair
        return pair

    def forget_request(self, request_id: str) -> None:
        self._pair_cache.pop(request_id, None)

    # -- polarization ----------------------------------------------------

    def polarization_channel(self, eps_id: str, node_id: str) -> cal.PolarizationChannelState:
        key = f"pol/{eps_id}/{node_id}"
        cached = getattr(self, "_pol_cache", None)
        if cached is None:
            cached = {}
            self._pol_cache = cached
        if key not in cached:
            rng = self.engine.derive_rng(key)
            cached[key] = cal.PolarizationChannelState(
                fiber_unitary=cal.random_su2(rng),
                drift_rate_rad_per_s=self.params.drift_rate_rad_per_s)
        return cached[key]

    def advance_drift(self, pair: _PairChannels, request_id: str) -> None:
        dt_ns = self.engine.now_ns - pair.last_drift_ns
        if dt_ns <= 0:
            return
        rng = self.engine.derive_rng(f"drift/{request_id}/{pair.last_drift_ns}")
        for state in pair.pol.values():
            state.drift(dt_ns / 1e9, rng)
        pair.last_drift_ns = self.engine.now_ns

    # -- verification sampling -------------------------------------------

    def take_verification_fault(self, request_id: str) -> bool:
        remaining = self.verification_faults.get(request_id, 0)
        if remaining > 0:
            self.verification_faults[request_id] = remaining - 1
            return True
        return False

    def verification_sample(self, request_id: str, eps_id: str,
                            lightpath: Lightpath, node_id: str,
                            integration_s: float, attempt: int) -> dict:
        """Two-stage probe outcome: measured loss, click rate with the
        quantum light on, and noise rate with it off."""
        eps_node = self.graph.node(eps_id)
        model = self.params.eps_params(eps_id).eps_model(eps_node.wavelength_outputs)
        ch = self.channel_model(lightpath, node_id)
        rng = self.engine.derive_rng(f"verify/{request_id}/{node_id}/{attempt}")
        expected_rate = model.pair_rate_hz * ch.transmittance * ch.detector_efficiency
        noise = noise_rate(ch)
        if self.take_verification_fault(request_id):
            # Injected fault: a co-propagating interferer floods the arm.
            noise += max(expected_rate, 10.0 * noise, 1000.0)
        clicks = rng.poisson((expected_rate + noise) * integration_s)
        noise_clicks = rng.poisson(noise * integration_s)
        return {
            "loss_estimate_db": lightpath.total_loss_db,
            "click_rate_hz": float(clicks / integration_s),
            "noise_rate_hz": float(noise_clicks / integration_s),
            "expected_rate_hz": float(expected_rate),
        }

    # -- distribution sampling -------------------------------------------

    def batch_sample(self, request_id: str, eps_id: str,
                     lightpaths: dict[str, Lightpath],
                     node_pair: tuple[str, str], basis: str,
                     duration_s: float, seq: int) -> dict:
        """One measurement batch: rates from the phenomenological model,
        fringe contrast degraded by current alignment residuals, ebits as
        a Poisson draw of detected pairs."""
        pair = self.pair_channels(request_id, eps_id, lightpaths, node_pair)
        self.advance_drift(pair, request_id)
        n1, n2 = node_pair
        stats = singles_and_coincidences(pair.eps_model, pair.arms[n1],
                                         pair.arms[n2], basis=basis)
        res = sum(cal.alignment_residual(pair.pol[n], pair.phase_eps)
                  for n in node_pair)
        contrast = max(0.0, 1.0 - 2.0 * res)
        v0 = pair.eps_model.visibility_for_basis(basis) * contrast
        vis = visibility_from_rates(stats.coincidences_hz, stats.accidentals_hz, v0)
        rng = self.engine.derive_rng(f"batch/{request_id}/{seq}")
        ebits = int(rng.poisson(stats.coincidences_hz * duration_s))
        return {
            "coincidences_hz": stats.coincidences_hz,
            "accidentals_hz": stats.accidentals_hz,
            "car": stats.car,
            "visibility": vis,
            "nonclassical": classify_nonclassical(min(max(vis, 0.0), 1.0))
            == VisibilityClass.NON_CLASSICAL,
            "singles_1_hz": stats.singles_1_hz,
            "singles_2_hz": stats.singles_2_hz,
            "ebits": ebits,
            "duration_s": duration_s,
        }

    # -- calibration hooks -------------------------------------------------

    def source_phase(self, eps_id: str) -> float:
        rng = self.engine.derive_rng(f"phase/{eps_id}")
        return float(rng.uniform(0.0, 2.0 * math.pi))

    def timebin_histogram(self, request_id: str, node_id: str):
        rng = self.engine.derive_rng(f"timebin/{request_id}/{node_id}")
        import numpy as np

        width = 10.0
        offsets = np.arange(0.0, 2000.0, width)
        counts = np.zeros_like(offsets)
        for center in (self.params.timebin_early_ps, self.params.timebin_late_ps):
            samples = rng.normal(center, self.params.timebin_jitter_ps, size=5000)
            hist, _ = np.histogram(samples, bins=np.append(offsets, 2000.0))
            counts += hist
        return offsets, counts.astype(int), width

    def interferometer_phase_truth(self, request_id: str, node_id: str) -> float:
        rng = self.engine.derive_rng(f"tbphase/{request_id}/{node_id}")
        return float(rng.uniform(0.0, 2.0 * math.pi))

    def interferometer_output(self, request_id: str, node_id: str,
                              phase_setting_rad: float) -> float:
        """Relative fringe output of the analyzing interferometer; the
        node maximizes this without knowing the underlying offset."""
        truth = self.interferometer_phase_truth(request_id, node_id)
        return 0.5 * (1.0 + math.cos(phase_setting_rad - truth))

    def hom_dip(self, eps_id: str) -> HomDipModel:
        p = self.params.eps_params(eps_id)
        return HomDipModel(baseline_rate_hz=200.0,
                           hom_visibility=p.hom_visibility,
                           coherence_time_ps=p.hom_coherence_ps)

    def true_delay(self, request_id: str, span: int = 48) -> int:
        if request_id not in self._true_delays:
            rng = self.engine.derive_rng(f"delay/{request_id}")
            self._true_delays[request_id] = int(rng.integers(0, span))
        return self._true_delays[request_id]

    def delay_oracle(self, request_id: str,
                     node_pair: tuple[str, str]) -> tuple[cal.DelayOracle, float]:
        """Counting oracle for the correlation-delay search plus the
        per-candidate signal rate used to size integration times."""
        pair = self._pair_cache.get(request_id)
        if pair is None:
            raise RuntimeError("pair channels not initialized")
        n1, n2 = node_pair
        stats = singles_and_coincidences(pair.eps_model, pair.arms[n1], pair.arms[n2])
        signal = max(stats.coincidences_hz, 1e-6)
        accidental = max(stats.accidentals_hz, 1e-12)
        rng = self.engine.derive_rng(f"delaysearch/{request_id}")
        oracle = cal.DelayOracle(true_delay=self.true_delay(request_id),
                                 signal_rate_hz=signal,
                                 accidental_rate_hz=accidental, rng=rng)
        return oracle, signal

    def current_residual(self, request_id: str, node_pair: tuple[str, str]) -> float:
        pair = self._pair_cache.get(request_id)
        if pair is None:
            return 0.0
        return sum(cal.alignment_residual(pair.pol[n], pair.phase_eps)
                   for n in node_pair)
