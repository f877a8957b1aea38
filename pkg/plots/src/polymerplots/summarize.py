"""Text verdict summaries of phase-scan style CSVs."""

from __future__ import annotations

from pathlib import Path

from .figures import SchemaError, read_csv

_NEEDED = ("alpha", "beta", "verdict")


def summarize(csv_paths) -> str:
    """Per-cell verdict table; duplicate cells with conflicting verdicts
    are flagged.  One output line per CSV row plus a footer."""
    lines: list[str] = []
    seen: dict[tuple, str] = {}
    n_rows = 0
    for path in csv_paths:
        header, rows = read_csv(path)
        for col in _NEEDED:
            if col not in (header or []):
                raise SchemaError(f"{path}: missing column {col!r} required by summarize")
        name = Path(path).name
        for r in rows:
            n_rows += 1
            key = (r["alpha"], r["beta"])
            verdict = r["verdict"]
            flag = ""
            if key in seen and seen[key] != verdict:
                flag = f"  ** CONFLICT with earlier verdict {seen[key]!r}"
            seen.setdefault(key, verdict)
            extra = f" p_hat={r['p_hat']}" if r.get("p_hat") else ""
            lines.append(f"{name}: alpha={r['alpha']} beta={r['beta']} "
                         f"verdict={verdict}{extra}{flag}")
    lines.append(f"rows: {n_rows}")
    return "\n".join(lines)
