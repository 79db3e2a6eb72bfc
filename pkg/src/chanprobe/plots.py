"""Figure rendering for experiment outputs.

Each experiment's tables are drawn to PNG files next to the CSVs (same
stem). The CSVs are the reproducibility contract; figures are a convenience
view and their bytes are not guaranteed stable across matplotlib versions.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _column(header: list[str], rows: list[list], name: str) -> list:
    return [row[header.index(name)] for row in rows]


def _save(fig, out_dir: Path, name: str) -> str:
    fig.tight_layout()
    fig.savefig(out_dir / name, dpi=150)
    plt.close(fig)
    return name


def _deviation_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = sorted({row[header.index("n")] for row in rows})
    for n in ns:
        sub = [row for row in rows if row[header.index("n")] == n]
        mus = _column(header, sub, "mu")
        values = _column(header, sub, "value")
        bounds = _column(header, sub, "bound")
        order = sorted(range(len(mus)), key=lambda i: mus[i])
        mus = [mus[i] for i in order]
        ax.plot(mus, [values[i] for i in order], "o-", label=f"n={n}")
        ax.plot(mus, [bounds[i] for i in order], "--", color="gray", lw=1)
    ax.set_xlabel("slack mu")
    ax.set_ylabel("deviation probability")
    ax.set_yscale("log")
    ax.set_title("worst-case deviation vs ceiling (dashed)")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, f"{stem}.png")


def _optimal_audit_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    exh = _column(header, rows, "exhaustive_value")
    opt = _column(header, rows, "optimal_value")
    lim = max(exh + opt + [1e-6])
    ax.plot([0, lim], [0, lim], "-", color="gray", lw=1)
    ax.plot(exh, opt, "o", ms=4)
    ax.set_xlabel("exhaustive maximum")
    ax.set_ylabel("threshold-walk value")
    ax.set_title("strategy optimality audit")
    return _save(fig, out_dir, f"{stem}.png")


def _surgery_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    diffs = _column(header, rows, "abs_diff")
    ax.hist([max(d, 1e-18) for d in diffs], bins=40)
    ax.set_xlabel("|averaged - original| success probability")
    ax.set_ylabel("sites")
    ax.set_title("replacement averaging identity")
    return _save(fig, out_dir, f"{stem}.png")


def _well_order_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = _column(header, rows, "steps")
    ax.hist(steps, bins=range(0, max(steps) + 2))
    ax.set_xlabel("surgery steps to a well-ordered tree")
    ax.set_ylabel("trees")
    ax.set_title("well-ordering termination")
    return _save(fig, out_dir, f"{stem}.png")


def _martingale_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    bias = [max(v, 1e-20) for v in _column(header, rows, "max_abs_step_bias")]
    ax.plot(range(len(bias)), bias, ".", ms=3)
    ax.set_yscale("log")
    ax.set_xlabel("strategy index")
    ax.set_ylabel("max |conditional step drift|")
    ax.set_title("score process drift")
    return _save(fig, out_dir, f"{stem}.png")


def _frontier_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(_column(header, rows, "D"), _column(header, rows, "R_bits"), "-", lw=1)
    ax.set_xlabel("expected distortion D")
    ax.set_ylabel("rate R (bits)")
    ax.set_title("rate-distortion frontier over input laws")
    return _save(fig, out_dir, f"{stem}.png")


def _simulate_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    row = rows[0]
    values = [row[header.index("p_error")], row[header.index("p_excess")]]
    los = [row[header.index("p_error_lo")], row[header.index("p_excess_lo")]]
    his = [row[header.index("p_error_hi")], row[header.index("p_excess_hi")]]
    err = [
        [v - lo for v, lo in zip(values, los)],
        [hi - v for v, hi in zip(values, his)],
    ]
    ax.bar([0, 1], values, yerr=err, capsize=4, width=0.5)
    ax.set_xticks([0, 1], ["decode error", "excess distortion"])
    ax.set_ylabel("probability")
    ax.set_title("closed-loop simulation")
    return _save(fig, out_dir, f"{stem}.png")


def _converse_messages_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    etas = sorted({row[header.index("eta")] for row in rows})
    width = 0.8 / max(len(etas), 1)
    for j, eta in enumerate(etas):
        sub = [row for row in rows if row[header.index("eta")] == eta]
        ms = _column(header, sub, "m")
        masses = _column(header, sub, "delta_mass")
        ax.bar([m + j * width for m in ms], masses, width=width, label=f"eta={eta}")
    ax.set_xlabel("message")
    ax.set_ylabel("restricted conditional mass")
    ax.set_title("mass of the well-behaved outcome set per message")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, f"{stem}.png")


def _converse_summary_figure(header, rows, out_dir: Path, stem: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 4))
    etas = _column(header, rows, "eta")
    ax.plot(etas, _column(header, rows, "gamma_n"), "o-", label="guaranteed fraction")
    ax.plot(etas, _column(header, rows, "good_fraction"), "s-", label="actual fraction")
    ax.set_xlabel("eta")
    ax.set_ylabel("fraction of messages")
    ax.set_title("good-message set vs its guarantee")
    ax.legend(fontsize=8)
    return _save(fig, out_dir, f"{stem}.png")


_FIGURES = {
    "deviation.csv": _deviation_figure,
    "optimal_audit.csv": _optimal_audit_figure,
    "surgery_identity.csv": _surgery_figure,
    "well_order.csv": _well_order_figure,
    "martingale.csv": _martingale_figure,
    "frontier.csv": _frontier_figure,
    "simulate.csv": _simulate_figure,
    "converse_messages.csv": _converse_messages_figure,
    "converse_summary.csv": _converse_summary_figure,
}


def render(kind: str, tables: dict, out_dir: Path) -> list[str]:
    """Draw the figures for one experiment run; returns written filenames."""
    written = []
    for name, (header, rows) in tables.items():
        drawer = _FIGURES.get(name)
        if drawer is None or not rows:
            continue
        written.append(drawer(header, rows, Path(out_dir), Path(name).stem))
    return written
