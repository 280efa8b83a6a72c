"""Bus topic and message-kind contract, plus the request state machine.

Topic strings and payload kinds are a wire contract shared with the
gateway API and the portal; changing them is a breaking change.
"""

from __future__ import annotations

import enum


class Topics:
    REGISTER = "qnet/register"
    TOPOLOGY = "qnet/topology"

    @staticmethod
    def request_ctl(request_id: str) -> str:
        return f"qnet/request/{request_id}/ctl"

    @staticmethod
    def request_meas(request_id: str) -> str:
        return f"qnet/request/{request_id}/meas"

    @staticmethod
    def cal(node_id: str) -> str:
        return f"qnet/cal/{node_id}"


class Kind:
    # discovery
    REGISTER = "register"
    TOPOLOGY_QUERY = "topology_query"
    TOPOLOGY_UPDATE = "topology_update"
    VERIFY_CLAIMS = "verify_claims"
    CLAIMS_VERIFIED = "claims_verified"
    RESOURCE_STATUS = "resource_status"
    # request lifecycle
    SUBMIT = "submit"
    STATE = "state"                  # controller's record-state announcements
    REJECT = "reject"
    ESTABLISH_PATHS = "establish_paths"      # controller -> SDN agent (rules)
    PATHS_ESTABLISHED = "paths_established"  # controller -> entities
    VERIFY_PATH = "verify_path"
    VERIFICATION_RESULT = "verification_result"
    CALIBRATE = "calibrate"
    CALIBRATION_DONE = "calibration_done"
    READY = "ready"
    START = "start"
    MEASUREMENT_BATCH = "measurement_batch"
    END = "end"
    STORE_RESULTS = "store_results"
    ACK = "ack"
    NACK = "nack"


class RequestState(str, enum.Enum):
    RECEIVED = "received"
    EPS_SELECTED = "eps_selected"
    PATHS_ESTABLISHED = "paths_established"
    PATHS_VERIFIED = "paths_verified"
    CALIBRATING = "calibrating"
    READY = "ready"
    DISTRIBUTING = "distributing"
    ENDED = "ended"
    STORED = "stored"
    REJECTED = "rejected"
    BLOCKED = "blocked"
    FAILED = "failed"


#: Canonical forward order of the happy path; first entries must respect it.
STATE_ORDER = [
    RequestState.RECEIVED,
    RequestState.EPS_SELECTED,
    RequestState.PATHS_ESTABLISHED,
    RequestState.PATHS_VERIFIED,
    RequestState.CALIBRATING,
    RequestState.READY,
    RequestState.DISTRIBUTING,
    RequestState.ENDED,
    RequestState.STORED,
]

TERMINAL_STATES = {RequestState.STORED, RequestState.REJECTED,
                   RequestState.BLOCKED, RequestState.FAILED}

#: Legal direct transitions. Re-establishment after a verification NACK
#: re-enters PATHS_ESTABLISHED; mid-run re-calibration loops
#: DISTRIBUTING -> CALIBRATING -> READY -> DISTRIBUTING.
ALLOWED_TRANSITIONS = {
    RequestState.RECEIVED: {RequestState.EPS_SELECTED, RequestState.REJECTED},
    RequestState.EPS_SELECTED: {RequestState.PATHS_ESTABLISHED,
                                RequestState.BLOCKED, RequestState.FAILED},
    RequestState.PATHS_ESTABLISHED: {RequestState.PATHS_VERIFIED,
                                     RequestState.PATHS_ESTABLISHED,
                                     RequestState.BLOCKED, RequestState.FAILED},
    RequestState.PATHS_VERIFIED: {RequestState.CALIBRATING, RequestState.FAILED},
    RequestState.CALIBRATING: {RequestState.READY, RequestState.FAILED},
    RequestState.READY: {RequestState.DISTRIBUTING, RequestState.FAILED},
    RequestState.DISTRIBUTING: {RequestState.CALIBRATING, RequestState.ENDED,
                                RequestState.FAILED},
    RequestState.ENDED: {RequestState.STORED, RequestState.FAILED},
}


def check_state_sequence(states: list[RequestState]) -> None:
    """Assert a record's state history follows the protocol.

    Checks every adjacent transition is legal, first entries occur in
    canonical order, and nothing follows a terminal state. Raises
    ProtocolOrderViolation otherwise.
    """
    from .records import ProtocolOrderViolation

    if not states:
        raise ProtocolOrderViolation("empty state history")
    if states[0] != RequestState.RECEIVED:
        raise ProtocolOrderViolation(f"history starts at {states[0]}, not received")
    for a, b in zip(states, states[1:]):
        if a in TERMINAL_STATES:
            raise ProtocolOrderViolation(f"transition out of terminal state {a}")
        if b not in ALLOWED_TRANSITIONS.get(a, set()):
            raise ProtocolOrderViolation(f"illegal transition {a.value} -> {b.value}")
    first_entry = {}
    for i, s in enumerate(states):
        first_entry.setdefault(s, i)
    ordered = [s for s in STATE_ORDER if s in first_entry]
    indices = [first_entry[s] for s in ordered]
    if indices != sorted(indices):
        raise ProtocolOrderViolation(
            "first entries out of canonical order: "
            + " -> ".join(s.value for s in states))
