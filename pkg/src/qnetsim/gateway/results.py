"""Result persistence: append-only newline-delimited records.

Records are immutable once written and serialized with a fixed field
order so identical runs produce identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..controlplane import RequestRecord
from ..controlplane.messages import RequestState


@dataclass
class ResultRecord:
    request_id: str
    requester: str
    final_state: str
    ebits_delivered: int
    target_ebits: int
    eps_id: str | None
    lightpaths: dict
    establish_attempts: int
    verify_attempts: int
    recalibrations: int
    rejection_reason: str | None
    failure_reason: str | None
    fidelity_estimate: float | None
    virtual_duration_s: float
    statistics: list[dict] = field(default_factory=list)
    calibration_reports: list[dict] = field(default_factory=list)
    state_history: list[dict] = field(default_factory=list)

    @property
    def target_met(self) -> bool:
        return self.ebits_delivered >= self.target_ebits

    @classmethod
    def from_record(cls, rec: RequestRecord) -> "ResultRecord":
        t0 = rec.state_history[0][0] if rec.state_history else 0
        t1 = rec.state_history[-1][0] if rec.state_history else 0
        return cls(
            request_id=rec.id,
            requester=rec.request.requester,
            final_state=rec.state.value,
            ebits_delivered=rec.ebits_delivered,
            target_ebits=rec.request.target_ebits,
            eps_id=rec.eps_id,
            lightpaths=dict(sorted(rec.lightpath_ids.items())),
            establish_attempts=rec.establish_attempts,
            verify_attempts=rec.verify_attempts,
            recalibrations=rec.recalibrations,
            rejection_reason=rec.rejection_reason,
            failure_reason=rec.failure_reason,
            fidelity_estimate=rec.fidelity_estimate,
            virtual_duration_s=(t1 - t0) / 1e9,
            statistics=list(rec.batches),
            calibration_reports=list(rec.calibration_reports),
            state_history=[{"t_ns": t, "state": s.value}
                           for t, s in rec.state_history],
        )

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "requester": self.requester,
            "final_state": self.final_state,
            "ebits_delivered": self.ebits_delivered,
            "target_ebits": self.target_ebits,
            "target_met": self.target_met,
            "eps_id": self.eps_id,
            "lightpaths": self.lightpaths,
            "establish_attempts": self.establish_attempts,
            "verify_attempts": self.verify_attempts,
            "recalibrations": self.recalibrations,
            "rejection_reason": self.rejection_reason,
            "failure_reason": self.failure_reason,
            "fidelity_estimate": self.fidelity_estimate,
            "virtual_duration_s": self.virtual_duration_s,
            "statistics": self.statistics,
            "calibration_reports": self.calibration_reports,
            "state_history": self.state_history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        d = dict(d)
        d.pop("target_met", None)
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def write_results(records: list[ResultRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_results(path) -> list[ResultRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(ResultRecord.from_dict(json.loads(line)))
    return out


def summarize(records: list[ResultRecord]) -> dict:
    """Run-level metrics; deterministic given the records."""
    total = len(records)
    by_state: dict[str, int] = {}
    for rec in records:
        by_state[rec.final_state] = by_state.get(rec.final_state, 0) + 1
    blocked = by_state.get(RequestState.BLOCKED.value, 0)
    stored = [r for r in records if r.final_state == RequestState.STORED.value]
    mean_time = (sum(r.virtual_duration_s for r in stored) / len(stored)
                 if stored else None)
    visibilities = []
    for rec in stored:
        visibilities.extend(b["visibility"] for b in rec.statistics
                            if "visibility" in b)
    return {
        "requests": total,
        "by_state": {k: by_state[k] for k in sorted(by_state)},
        "blocking_probability": (blocked / total) if total else 0.0,
        "mean_time_to_stored_s": mean_time,
        "ebits_total": sum(r.ebits_delivered for r in records),
        "mean_visibility": (sum(visibilities) / len(visibilities)
                            if visibilities else None),
    }
