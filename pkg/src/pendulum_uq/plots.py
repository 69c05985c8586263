"""Optional SVG renderings of the figure tables (needs matplotlib)."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_figures(fig_dir) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    out = []
    # deterministic SVG ids and no date stamp
    plt.rcParams["svg.hashsalt"] = "pendulum-uq"
    meta = {"Date": None}

    rows = _rows(fig_dir / "fig1_noise.csv")
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, len(methods), figsize=(4 * len(methods), 4), squeeze=False)
    for ax, m in zip(axes[0], methods):
        pts = [(float(r["analytic_sigma_rel"]), float(r["predicted_sigma_rel"])) for r in rows if r["method"] == m]
        ax.scatter(*zip(*pts), s=2, alpha=0.3)
        lim = max(max(p) for p in pts)
        ax.plot([0, lim], [0, lim], "k--", lw=1)
        ax.set(title=m.upper(), xlabel="analytic relative uncertainty", ylabel="predicted relative uncertainty")
    fig.tight_layout()
    out.append(fig_dir / "fig1_noise.svg")
    fig.savefig(out[-1], metadata=meta)
    plt.close(fig)

    rows = _rows(fig_dir / "fig2_ood.csv")
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, kind in zip(axes, ("shift_g", "shift_l_keep_g")):
        curves = defaultdict(list)
        for r in rows:
            if r["shift_kind"] in (kind, "in_distribution"):
                curves[r["method"]].append((float(r["range_lo"]), float(r["median_sigma_ep"])))
        for m, pts in sorted(curves.items()):
            agg = defaultdict(list)
            for x, y in pts:
                agg[x].append(y)
            xs = sorted(agg)
            ax.plot(range(len(xs)), [sum(agg[x]) / len(agg[x]) for x in xs], "o-", label=m.upper())
        ax.set(yscale="log", title=kind, xlabel="shift level (0 = in distribution)", ylabel="median epistemic sigma")
        ax.legend()
    fig.tight_layout()
    out.append(fig_dir / "fig2_ood.svg")
    fig.savefig(out[-1], metadata=meta)
    plt.close(fig)

    rows = _rows(fig_dir / "fig3_calibration.csv")
    panels = list(dict.fromkeys(r["panel"] for r in rows))
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 4), squeeze=False)
    for ax, panel in zip(axes[0], panels):
        curves = defaultdict(lambda: defaultdict(list))
        for r in rows:
            if r["panel"] == panel:
                curves[r["method"]][float(r["nominal"])].append(float(r["empirical"]))
        for m, c in sorted(curves.items()):
            xs = sorted(c)
            ax.plot(xs, [sum(c[x]) / len(c[x]) for x in xs], "o-", ms=3, label=m.upper())
        ax.plot([0, 1], [0, 1], "k--", lw=1)
        ax.set(title=panel, xlabel="nominal coverage", ylabel="empirical coverage")
        ax.legend()
    fig.tight_layout()
    out.append(fig_dir / "fig3_calibration.svg")
    fig.savefig(out[-1], metadata=meta)
    plt.close(fig)
    return out
