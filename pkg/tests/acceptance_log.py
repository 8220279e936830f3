"""Collects per-criterion check outcomes for the end-of-session summary."""

from collections import OrderedDict

TITLES = OrderedDict(
    [
        (1, "constant-volatility benchmark at n=750, m=225000"),
        (2, "monotone convergence from below at desk scale"),
        (3, "orders of convergence over the published mesh sizes"),
        (4, "RAPM sweep distances and R^(1/3) scaling"),
        (5, "Barles-Soner sweep distances and a^(2/3) scaling"),
        (6, "exact anchors"),
        (7, "property suites"),
        (8, "invariants on solved curves"),
    ]
)

RECORDS: dict[int, list[tuple[str, bool, str]]] = {k: [] for k in TITLES}


class Checks:
    """Record named checks for one criterion, then fail once with all misses."""

    def __init__(self, criterion: int):
        self.criterion = criterion
        self.items: list[tuple[str, bool, str]] = []

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        ok = bool(ok)
        self.items.append((name, ok, detail))
        RECORDS[self.criterion].append((name, ok, detail))
        return ok

    def assert_all(self) -> None:
        missed = [f"{n} ({d})" for n, ok, d in self.items if not ok]
        assert not missed, "failed checks: " + "; ".join(missed)


def summary_lines() -> list[str]:
    lines = []
    for k, title in TITLES.items():
        recs = RECORDS[k]
        if not recs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(ok for _, ok, _ in recs) else "FAIL"
        lines.append(f"criterion {k}: {status}  {title}")
        for name, ok, detail in recs:
            lines.append(f"    [{'ok' if ok else 'MISS'}] {name}: {detail}")
    return lines
