"""Request and registration records kept by the controller."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .messages import RequestState, check_state_sequence


class ProtocolOrderViolation(Exception):
    pass


class QubitType(str, enum.Enum):
    POLARIZATION = "polarization"
    TIME_BIN = "time_bin"


class ServiceType(str, enum.Enum):
    ENTANGLEMENT = "entanglement"
    TELEPORTATION = "teleportation"


@dataclass
class ResourceRegistration:
    resource_id: str
    kind: str
    features: dict = field(default_factory=dict)
    connectivity_claims: list[dict] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "kind": self.kind,
            "features": self.features,
            "connectivity_claims": self.connectivity_claims,
        }


@dataclass
class RegistryEntry:
    registration: ResourceRegistration
    verified: bool = False
    quarantined: bool = False
    online: bool = True

    @property
    def schedulable(self) -> bool:
        return self.verified and not self.quarantined and self.online


@dataclass
class EntanglementRequest:
    id: str
    requester: str
    qubit_type: QubitType
    node_pair: tuple[str, str]
    start_time_s: float
    end_time_s: float
    calibration_basis: str = "hv"
    target_ebits: int = 1
    service: ServiceType = ServiceType.ENTANGLEMENT

    def __post_init__(self) -> None:
        if self.node_pair[0] == self.node_pair[1]:
            raise ValueError("node pair must be distinct")
        if self.end_time_s <= self.start_time_s:
            raise ValueError("end time must be after start time")
        if self.target_ebits < 1:
            raise ValueError("target_ebits must be >= 1")
        if not self.requester:
            raise ValueError("requester credential must be nonempty")

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "requester": self.requester,
            "qubit_type": self.qubit_type.value,
            "node_pair": list(self.node_pair),
            "start_time_s": self.start_time_s,
            "end_time_s": self.end_time_s,
            "calibration_basis": self.calibration_basis,
            "target_ebits": self.target_ebits,
            "service": self.service.value,
        }


@dataclass
class RequestRecord:
    """Full lifecycle state of one request, owned by the controller."""

    request: EntanglementRequest
    state: RequestState = RequestState.RECEIVED
    state_history: list[tuple[int, RequestState]] = field(default_factory=list)
    eps_id: str | None = None
    bsm_id: str | None = None
    lightpath_ids: dict[str, str] = field(default_factory=dict)
    ebits_delivered: int = 0
    establish_attempts: int = 0
    verify_attempts: int = 0
    recalibrations: int = 0
    failure_reason: str | None = None
    rejection_reason: str | None = None
    calibration_reports: list[dict] = field(default_factory=list)
    batches: list[dict] = field(default_factory=list)
    verification_results: list[dict] = field(default_factory=list)
    fidelity_estimate: float | None = None
    trace_seqs: list[int] = field(default_factory=list)

    @property
    def id(self) -> str:
        return self.request.id

    def states(self) -> list[RequestState]:
        return [s for _, s in self.state_history]

    def enter(self, t_ns: int, state: RequestState) -> None:
        self.state = state
        self.state_history.append((t_ns, state))

    def assert_protocol_order(self) -> None:
        check_state_sequence(self.states())

    def to_payload(self) -> dict:
        return {
            "request": self.request.to_payload(),
            "state": self.state.value,
            "state_history": [{"t_ns": t, "state": s.value}
                              for t, s in self.state_history],
            "eps_id": self.eps_id,
            "bsm_id": self.bsm_id,
            "lightpaths": dict(self.lightpath_ids),
            "ebits_delivered": self.ebits_delivered,
            "establish_attempts": self.establish_attempts,
            "verify_attempts": self.verify_attempts,
            "recalibrations": self.recalibrations,
            "failure_reason": self.failure_reason,
            "rejection_reason": self.rejection_reason,
            "fidelity_estimate": self.fidelity_estimate,
        }
