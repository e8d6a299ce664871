"""Render figures from a scenario's delimited output files.

Reads the CSVs a benchmark run wrote (report, profiles, energies,
convergence) and drops PNG companions next to them, mirroring the usual
verification plots: loss versus frequency per solver variant, magnetic
energy over the final period against the reference, |B| snapshots across
the stack, and loss convergence against the number of DoFs.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

_MODE_STYLE = {
    "reference": dict(color="tab:red", ls="--", marker="s"),
    "fine_hbfem": dict(color="tab:purple", ls="-", marker="d"),
    "hom_original": dict(color="tab:gray", ls="-", marker="^"),
    "hom_naive_dc": dict(color="tab:green", ls="-", marker="^"),
    "hom_refined_dc": dict(color="tab:blue", ls="-", marker="o"),
}


def _style(mode: str) -> dict:
    return _MODE_STYLE.get(mode, dict(ls="-", marker="."))


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()
                 if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return reader.fieldnames or [], list(reader)


def _floats(rows, key):
    out = []
    for r in rows:
        try:
            out.append(float(r[key]))
        except (ValueError, TypeError, KeyError):
            out.append(float("nan"))
    return out


def render_loss_vs_frequency(report_csv: Path, out_png: Path) -> None:
    _, rows = _read_csv(report_csv)
    modes = sorted({r["mode"] for r in rows})
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for mode in modes:
        sel = [r for r in rows if r["mode"] == mode]
        f = _floats(sel, "f")
        loss = _floats(sel, "loss")
        ax.loglog(f, loss, label=mode, **_style(mode))
    ax.set_xlabel("fundamental frequency (Hz)")
    ax.set_ylabel("time-averaged eddy loss (W/m$^2$)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_energy(energy_csv: Path, out_png: Path) -> None:
    names, rows = _read_csv(energy_csv)
    if "t" not in names:
        return
    t = _floats(rows, "t")
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name in names:
        if not name.startswith("w_"):
            continue
        mode = name[2:]
        style = _style("reference" if mode == "ref" else mode)
        ax.plot([x * 1e3 for x in t], _floats(rows, name),
                label=mode, color=style.get("color"),
                ls=style.get("ls", "-"))
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("magnetic energy (J/m$^2$)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_profile(profile_csv: Path, out_png: Path) -> None:
    names, rows = _read_csv(profile_csv)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name in names:
        if not name.startswith("b_"):
            continue
        mode = name[2:]
        zkey = f"z_{mode}"
        if zkey not in names:
            continue
        z = _floats(rows, zkey)
        b = _floats(rows, name)
        pairs = [(zi, bi) for zi, bi in zip(z, b)
                 if zi == zi and bi == bi]  # drop padding NaNs
        if not pairs:
            continue
        style = _style("reference" if mode == "ref" else mode)
        ax.plot([p[0] * 1e3 for p in pairs], [p[1] for p in pairs],
                label=mode, color=style.get("color"), ls=style.get("ls", "-"))
    ax.set_xlabel("z (mm)")
    ax.set_ylabel("|B| (T)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_convergence(convergence_csv: Path, out_png: Path) -> None:
    _, rows = _read_csv(convergence_csv)
    modes = sorted({r["mode"] for r in rows})
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for mode in modes:
        sel = sorted((int(r["dofs"]), float(r["loss"]))
                     for r in rows if r["mode"] == mode)
        if not sel:
            continue
        finest = sel[-1][1]
        dev = [abs(loss - finest) / abs(finest) * 100 for _, loss in sel]
        ax.semilogx([d for d, _ in sel], dev, label=mode, **_style(
            "reference" if mode == "reference" else mode))
    ax.set_xlabel("# DoFs")
    ax.set_ylabel("deviation from finest result (%)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_scenario(directory) -> list[Path]:
    """Render every known figure for a scenario output directory."""
    directory = Path(directory)
    written: list[Path] = []

    report = directory / "report.csv"
    if report.exists():
        out = directory / "losses_vs_frequency.png"
        render_loss_vs_frequency(report, out)
        written.append(out)
    for energy_csv in sorted(directory.glob("energy_*.csv")):
        out = energy_csv.with_suffix(".png")
        render_energy(energy_csv, out)
        written.append(out)
    for profile_csv in sorted(directory.glob("profiles_*.csv")):
        out = profile_csv.with_suffix(".png")
        render_profile(profile_csv, out)
        written.append(out)
    conv = directory / "convergence.csv"
    if conv.exists():
        out = directory / "convergence.png"
        render_convergence(conv, out)
        written.append(out)
    logger.info("rendered %d figures in %s", len(written), directory)
    return written
