"""Sweep figures rendered to files with the non-interactive backend."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def _num(v):
    return float(v) if v not in ("", None) else None


def plot_sweep(rows: Sequence[dict], axis: str, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=100)
    if axis == "team":
        groups: dict = {}
        for r in rows:
            groups.setdefault((r["assign_mode"], r["deadline"]), []).append(r)
        for (mode, D), rs in groups.items():
            _series(ax, rs, "team", f"{mode}, D={D:g}", "-" if mode == "optimal" else "--")
        ax.set_xlabel("robots K")
    else:
        _series(ax, rows, "gamma_factor" if axis == "gamma" else "deadline", "success", "-")
        ax.set_xlabel("gamma factor" if axis == "gamma" else "deadline D")
        if axis == "gamma":
            ax.set_xscale("symlog", linthresh=1e-3)
    ax.set_ylabel("success probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)


def _series(ax, rows, xkey: str, label: str, style: str) -> None:
    ok = [r for r in rows if r["status"] == "ok"]
    x = [float(r[xkey]) for r in ok]
    theo = [float(r["theoretical_success"]) for r in ok]
    (line,) = ax.plot(x, theo, style, marker="o", ms=3, label=f"{label} (theory)")
    emp = [(xi, _num(r["empirical_success"]), _num(r["ci_low"]), _num(r["ci_high"])) for xi, r in zip(x, ok)]
    emp = [e for e in emp if e[1] is not None]
    if emp:
        ax.errorbar(
            [e[0] for e in emp],
            [e[1] for e in emp],
            yerr=[[e[1] - e[2] for e in emp], [e[3] - e[1] for e in emp]],
            fmt="x",
            color=line.get_color(),
            capsize=2,
            label=f"{label} (simulated)",
        )
