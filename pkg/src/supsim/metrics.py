"""Per-trial cost counters.

Counters model the cost of the algorithms being simulated, not the cost of
simulating them: a merge of two runs with combined length L is charged L
comparisons even though the simulator computes it with vectorized numpy.
Charging conventions:

  comp_work       multiply-adds (both operands full field elements) and key
                  comparisons, per role.  The 0/1-masked column sums inside
                  Freivalds are additions, not multiply-adds, and are not
                  charged here.
  verify_work     comparisons/hash-input words spent on *checking* inputs
                  (digest recomputation, tag checks, sortedness and range
                  scans).  Kept apart from comp_work so the algorithmic
                  ceilings of the runtime bounds can be asserted without
                  folding verification constants into them.
  comm_work       items or field elements moved along an edge, plus
                  source->worker and worker->target transfers.
  supervisor_msgs scalar ids/counts/digests handled by the supervisor.

All counters are monotone within a run; only honest executions charge
comp/verify work (the adversary's own effort is out of scope, and the
engine's shadow evaluation of what an honest worker would have produced is
bookkeeping, not modeled work).
"""

from __future__ import annotations

from dataclasses import dataclass, field

ROLES = ("worker", "source", "target", "supervisor")


def _role_dict() -> dict[str, int]:
    return {r: 0 for r in ROLES}


@dataclass
class Metrics:
    rounds: int = 0
    source_sends: int = 0
    target_receives: int = 0
    comp_work: dict[str, int] = field(default_factory=_role_dict)
    verify_work: dict[str, int] = field(default_factory=_role_dict)
    comm_work: dict[str, int] = field(default_factory=_role_dict)
    supervisor_msgs: int = 0
    per_task_max_items: int = 0

    def charge_comp(self, role: str, amount: int) -> None:
        self.comp_work[role] += amount

    def charge_verify(self, role: str, amount: int) -> None:
        self.verify_work[role] += amount

    def charge_comm(self, role: str, amount: int) -> None:
        self.comm_work[role] += amount

    def saw_task_items(self, count: int) -> None:
        if count > self.per_task_max_items:
            self.per_task_max_items = count

    def total_comp(self) -> int:
        return sum(self.comp_work.values())

    def total_comm(self) -> int:
        return sum(self.comm_work.values())

    def as_row(self) -> dict[str, int]:
        """Flatten to scalar fields with a stable key order (for emit)."""
        row: dict[str, int] = {
            "rounds": self.rounds,
            "source_sends": self.source_sends,
            "target_receives": self.target_receives,
            "supervisor_msgs": self.supervisor_msgs,
            "per_task_max_items": self.per_task_max_items,
        }
        for name, d in (
            ("comp", self.comp_work),
            ("verify", self.verify_work),
            ("comm", self.comm_work),
        ):
            for role in ROLES:
                row[f"{name}_{role}"] = d[role]
        row["comp_total"] = self.total_comp()
        row["comm_total"] = self.total_comm()
        return row


class NullMetrics(Metrics):
    """Sink for shadow executions: accepts charges, records nothing."""

    def charge_comp(self, role: str, amount: int) -> None:
        pass

    def charge_verify(self, role: str, amount: int) -> None:
        pass

    def charge_comm(self, role: str, amount: int) -> None:
        pass

    def saw_task_items(self, count: int) -> None:
        pass
