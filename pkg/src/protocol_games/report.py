"""Plain-text rendering of verdict JSON."""
from __future__ import annotations

HEADER = ("property", "estimate", "ci_low", "ci_high", "relation", "threshold", "result")


class MalformedVerdict(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return "-"
    return f"{float(v):.4f}"


def report_render(verdict: dict) -> str:
    """One row per property; fixed 4-decimal rounding."""
    if not isinstance(verdict, dict) or not isinstance(verdict.get("properties"), dict):
        raise MalformedVerdict("verdict needs a 'properties' mapping")
    rows = [HEADER]
    for name in sorted(verdict["properties"]):
        p = verdict["properties"][name]
        try:
            ci = p["ci"]
            rows.append((name, _fmt(p["estimate"]), _fmt(ci[0]), _fmt(ci[1]), p["relation"], _fmt(p["threshold"]), "PASS" if p["passed"] else "FAIL"))
        except (KeyError, TypeError, IndexError) as e:
            raise MalformedVerdict(f"property {name!r} is malformed") from e
    widths = [max(len(r[i]) for r in rows) for i in range(len(HEADER))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
