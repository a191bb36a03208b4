"""Report rendering: delimited metrics, JSON with config echo, and figures.

Per-turn curves are reported relative to a named reference policy (in
percentage points, so the reference traces y = 0 against itself).
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .episodes import MetricsReport

SUMMARY_FIELDS = ("policy", "n_episodes", "success_rate", "average_turn", "impatience")


def relative_curve(report: MetricsReport, reference: MetricsReport) -> list[float]:
    """Per-turn success-rate difference against the reference, in points."""
    return [100.0 * (a - b)
            for a, b in zip(report.per_turn_success, reference.per_turn_success)]


def write_report(out_dir, reports: list[MetricsReport], reference: str | None = None,
                 sweep_rows: list[dict] | None = None, extra_config: dict | None = None):
    """Write metrics.csv / metrics.json / per_turn.csv plus PNG figures.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "metrics.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for r in reports:
            w.writerow([r.policy, r.n_episodes, repr(r.success_rate),
                        repr(r.average_turn), repr(r.impatience)])
    written.append(path)

    path = os.path.join(out_dir, "metrics.json")
    doc = {"reports": [r.to_dict() for r in reports],
           "reference": reference,
           "config": extra_config or {}}
    if sweep_rows is not None:
        doc["sweeps"] = [{k: (v.to_dict() if isinstance(v, MetricsReport) else v)
                          for k, v in row.items()} for row in sweep_rows]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    written.append(path)

    ref = None
    if reference is not None:
        matches = [r for r in reports if r.policy == reference]
        if not matches:
            raise ValueError(f"reference policy {reference!r} not among reports")
        ref = matches[0]

    path = os.path.join(out_dir, "per_turn.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["policy"] + [f"turn_{t}" for t in
                               range(1, len(reports[0].per_turn_success) + 1)]
        w.writerow(header)
        for r in reports:
            w.writerow([r.policy] + [repr(v) for v in r.per_turn_success])
        if ref is not None:
            for r in reports:
                w.writerow([f"{r.policy}_rel_{reference}"]
                           + [repr(v) for v in relative_curve(r, ref)])
    written.append(path)

    written.append(_figure_per_turn(out_dir, reports, ref, reference))
    if sweep_rows:
        written.append(_figure_sweep(out_dir, sweep_rows))
    return written


def _figure_per_turn(out_dir, reports, ref, reference) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    turns = range(1, len(reports[0].per_turn_success) + 1)
    for r in reports:
        if ref is not None:
            ax.plot(turns, relative_curve(r, ref), marker="o", markersize=3, label=r.policy)
        else:
            ax.plot(turns, [100 * v for v in r.per_turn_success],
                    marker="o", markersize=3, label=r.policy)
    ax.set_xlabel("turn")
    if ref is not None:
        ax.set_ylabel(f"success rate vs {reference} (points)")
        ax.axhline(0.0, color="gray", lw=0.8, ls="--")
    else:
        ax.set_ylabel("success rate (%)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(out_dir, "per_turn.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _figure_sweep(out_dir, sweep_rows) -> str:
    kinds = sorted({row["kind"] for row in sweep_rows})
    fig, axes = plt.subplots(len(kinds), 2, figsize=(9, 3.2 * len(kinds)),
                             squeeze=False)
    for k, kind in enumerate(kinds):
        rows = [r for r in sweep_rows if r["kind"] == kind]
        policies = sorted({r["policy"] for r in rows})
        for name in policies:
            mine = [r for r in rows if r["policy"] == name]
            xs = [r["value"] for r in mine]
            axes[k][0].plot(xs, [100 * r["report"].success_rate for r in mine],
                            marker="o", label=name)
            axes[k][1].plot(xs, [r["report"].impatience for r in mine],
                            marker="o", label=name)
        axes[k][0].set_ylabel("success rate (%)")
        axes[k][1].set_ylabel("impatience")
        for col in (0, 1):
            axes[k][col].set_xlabel(kind)
            axes[k][col].grid(alpha=0.3)
        axes[k][0].legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "sweeps.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"policy": row["policy"], "n_episodes": int(row["n_episodes"]),
             "success_rate": float(row["success_rate"]),
             "average_turn": float(row["average_turn"]),
             "impatience": float(row["impatience"])}
            for row in csv.DictReader(fh)
        ]
