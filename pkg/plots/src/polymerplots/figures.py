"""Figure rendering from polymerlab CSV artifacts.

Rendering is read-only and byte-reproducible: fixed style, the Agg
backend, no timestamps (SVG dates are scrubbed).  Each figure kind
declares the CSV columns it needs and fails naming the first missing
one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "polymerlab",
})

KINDS = ("phase-diagram", "fe-curve", "bound-curve", "endpoint-hist",
         "atom-curve", "fluct-curve")

REQUIRED = {
    "phase-diagram": ("alpha", "beta", "verdict"),
    "fe-curve": ("beta", "p_hat", "p_se"),
    "bound-curve": ("alpha", "beta", "p_upper"),
    "endpoint-hist": ("x", "polymer_mass", "free_mass"),
    "atom-curve": ("n", "mean_running_fraction", "mean_max_mass"),
    "fluct-curve": ("N", "mean_exit_prob", "se"),
}

VERDICT_COLORS = {
    "weak-consistent": "#2166ac",
    "very-strong-consistent": "#b2182b",
    "undecided": "#bdbdbd",
}


class SchemaError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    input: str
    output: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "FigureSpec":
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - {"kind", "input", "output", "options"}
        if unknown:
            raise SchemaError(f"unknown figure spec keys: {sorted(unknown)}")
        if raw.get("kind") not in KINDS:
            raise SchemaError(f"figure kind must be one of {KINDS}, got {raw.get('kind')!r}")
        return cls(kind=raw["kind"], input=raw["input"], output=raw["output"],
                   options=raw.get("options", {}))


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    return header, rows


def check_columns(header: list[str], kind: str, path) -> None:
    for col in REQUIRED[kind]:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r} required by {kind}")


def _floats(rows, col):
    out = []
    for r in rows:
        v = r[col]
        out.append(math.nan if v in ("", None) else float(v))
    return np.array(out)


def fit_loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(np.abs(y)), 1)[0])


def _empty(ax, path):
    ax.text(0.5, 0.5, f"empty input: {Path(path).name}", ha="center", va="center",
            transform=ax.transAxes)


def render(spec: FigureSpec) -> Path:
    """Render one figure to spec.output; returns the written path."""
    header, rows = read_csv(spec.input)
    check_columns(header, spec.kind, spec.input)
    fig, ax = plt.subplots()
    opts = spec.options

    if not rows:
        _empty(ax, spec.input)
    elif spec.kind == "phase-diagram":
        alphas = _floats(rows, "alpha")
        betas = _floats(rows, "beta")
        colors = [VERDICT_COLORS.get(r["verdict"], "#000000") for r in rows]
        ax.scatter(betas, alphas, c=colors, s=160, marker="s", edgecolors="k",
                   linewidths=0.4)
        handles = [plt.Line2D([], [], marker="s", linestyle="", color=c, label=v)
                   for v, c in VERDICT_COLORS.items()]
        ax.legend(handles=handles, fontsize=7, loc="upper right")
        ax.set_xlabel("beta")
        ax.set_ylabel("alpha")
        ax.set_title("phase diagram (criteria verdicts)")
    elif spec.kind == "fe-curve":
        betas = _floats(rows, "beta")
        p = _floats(rows, "p_hat")
        se = _floats(rows, "p_se")
        order = np.argsort(betas)
        ax.errorbar(betas[order], p[order], yerr=3 * se[order], fmt="o-", capsize=3,
                    label="p_hat with 3 SE")
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_xlabel("beta")
        ax.set_ylabel("free energy p(beta) estimate")
        ax.legend(fontsize=7)
        ax.set_title("free energy vs beta")
    elif spec.kind == "bound-curve":
        alphas = _floats(rows, "alpha")
        notes = []
        for a in np.unique(alphas[~np.isnan(alphas)]):
            sel = alphas == a
            betas = _floats(rows, "beta")[sel]
            pu = _floats(rows, "p_upper")[sel]
            ok = ~np.isnan(pu)
            if ok.sum() < 2:
                continue
            slope = fit_loglog_slope(betas[ok], pu[ok])
            ax.loglog(betas[ok], np.abs(pu[ok]), "o-",
                      label=f"alpha={a:g}: slope {slope:.2f}")
            notes.append(slope)
        ax.set_xlabel("beta")
        ax.set_ylabel("|p_upper(beta)|")
        ax.legend(fontsize=7)
        ax.set_title("free-energy upper bound, log-log")
        if opts.get("annotate_slope", True) and notes:
            ax.text(0.03, 0.03, "fitted slopes: " + ", ".join(f"{s:.2f}" for s in notes),
                    transform=ax.transAxes, fontsize=7)
    elif spec.kind == "endpoint-hist":
        x = _floats(rows, "x")
        ax.plot(x, _floats(rows, "polymer_mass"), drawstyle="steps-mid",
                label="polymer endpoint (replica mean)")
        ax.plot(x, _floats(rows, "free_mass"), drawstyle="steps-mid",
                label="free walk")
        ax.set_xlabel("x")
        ax.set_ylabel("mass")
        if opts.get("logy"):
            ax.set_yscale("log")
        ax.legend(fontsize=7)
        ax.set_title("endpoint laws")
    elif spec.kind == "atom-curve":
        n = _floats(rows, "n")
        ax.plot(n, _floats(rows, "mean_running_fraction"), label="atom fraction (running)")
        ax.plot(n, _floats(rows, "mean_max_mass"), label="mean max endpoint mass")
        ax.set_xlabel("n")
        ax.set_ylabel("value")
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=7)
        ax.set_title("endpoint atom statistics")
    elif spec.kind == "fluct-curve":
        N = _floats(rows, "N")
        m = _floats(rows, "mean_exit_prob")
        se = _floats(rows, "se")
        order = np.argsort(N)
        ax.errorbar(N[order], m[order], yerr=3 * np.nan_to_num(se[order]), fmt="o-",
                    capsize=3)
        ax.set_xscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("mean exit probability")
        ax.set_ylim(-0.02, 1.05)
        ax.set_title("corridor exit probability vs N")

    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".svg":
        fig.savefig(out, metadata={"Date": None})
    else:
        fig.savefig(out)
    plt.close(fig)
    return out
