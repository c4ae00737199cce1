"""Static PNG charts drawn from the CSV files of a finished run.

Nothing is computed here beyond reshaping the CSV columns. Images are
written without timestamps or version metadata, so re-rendering identical
CSVs gives identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

__all__ = ["render_charts", "expected_inputs"]

_REQUIRED = {
    "relax": ["manifest.json", "bloch_diag.csv", "be_curve.csv", "populations.csv", "energies.csv"],
    "equilibrate": ["manifest.json", "bloch_diag.csv", "be_curve.csv", "populations.csv"],
    "transport": ["manifest.json"],
    "lyapunov": ["manifest.json"],
}


def expected_inputs(kind: str | None) -> list[str]:
    return _REQUIRED.get(kind, ["manifest.json"])


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _missing(out: Path, names) -> list[str]:
    return [n for n in names if not (out / n).exists()]


def _bloch_heatmap(ax, cols, region):
    sel = cols["region"] == region
    t, k, rho = cols["t"][sel], cols["k"][sel].astype(int), cols["rho_kk"][sel]
    times = np.unique(t)
    grid = rho.reshape(times.size, k.max() + 1)
    ax.imshow(grid.T, aspect="auto", origin="lower", extent=(times[0], times[-1], -0.5, k.max() + 0.5), cmap="viridis")
    ax.set_xlabel("t")
    ax.set_ylabel("k")
    ax.set_title(f"Bloch populations ({region})")


def _population_heatmap(ax, cols):
    t, site, n = cols["t"], cols["site"].astype(int), cols["n"]
    times = np.unique(t)
    grid = n.reshape(times.size, site.max() + 1)
    im = ax.imshow(grid.T, aspect="auto", origin="lower", extent=(times[0], times[-1], -0.5, site.max() + 0.5), cmap="magma")
    ax.set_xlabel("t")
    ax.set_ylabel("site")
    ax.set_title("site populations")
    ax.figure.colorbar(im, ax=ax)


def _relax(out: Path) -> list[Path]:
    bloch = read_csv(out / "bloch_diag.csv")
    curve = read_csv(out / "be_curve.csv")
    energies = read_csv(out / "energies.csv")
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    _bloch_heatmap(axes[0, 0], bloch, str(bloch["region"][0]))
    ax = axes[0, 1]
    ax.plot(curve["kappa"], curve["n_k_initial"], "k-", label="initial Bose-Einstein")
    ax.errorbar(curve["kappa"], curve["rho_kk_final"], yerr=curve["se_final"], fmt="o", ms=3, label="final")
    refit = curve["n_k_refit"]
    if refit.dtype.kind == "f":
        ax.plot(curve["kappa"], refit, "r--", label="refitted Bose-Einstein")
    ax.set_xlabel("kappa")
    ax.set_ylabel("rho_kk")
    ax.legend()
    ax = axes[1, 0]
    if (out / "lyapunov.csv").exists():
        ly = read_csv(out / "lyapunov.csv")
        ax.plot(ly["E_total"], ly["lambda"], ".", ms=2)
        ax.set_xlabel("energy per site")
        ax.set_ylabel("lambda")
        ax.set_title("Lyapunov exponents")
    else:
        for key in ("E_total", "E_K", "E_P"):
            ax.plot(energies["t"], energies[key], label=key)
        ax.set_xlabel("t")
        ax.legend()
        ax.set_title("mean energies per site")
    ax = axes[1, 1]
    hist = out / "energy_hist_final.csv"
    if hist.exists():
        h = read_csv(hist)
        for comp in np.unique(h["component"]):
            sel = h["component"] == comp
            centers = 0.5 * (h["bin_lo"][sel] + h["bin_hi"][sel])
            ax.step(centers, h["count"][sel], where="mid", label=str(comp))
        ax.legend()
        ax.set_xlabel("energy per site")
        ax.set_title("energy histogram (final)")
    fig.tight_layout()
    charts = [_save(fig, out / "overview.png")]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in ("E_total", "E_K", "E_P"):
        ax.plot(energies["t"], energies[key], label=key)
    ax.set_xlabel("t")
    ax.legend()
    charts.append(_save(fig, out / "energies.png"))
    return charts


def _equilibrate(out: Path) -> list[Path]:
    bloch = read_csv(out / "bloch_diag.csv")
    curve = read_csv(out / "be_curve.csv")
    pops = read_csv(out / "populations.csv")
    regions = sorted(set(bloch["region"].tolist()))
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    _population_heatmap(axes[0, 0], pops)
    for ax, region in zip((axes[0, 1], axes[1, 0]), regions):
        _bloch_heatmap(ax, bloch, region)
    ax = axes[1, 1]
    ax.plot(curve["kappa"], curve["n_k_target"], "k-", label="target Bose-Einstein")
    for region in regions:
        ax.plot(curve["kappa"], curve[f"rho_kk_{region}"], "o", ms=3, label=region)
    ax.set_xlabel("kappa")
    ax.legend()
    fig.tight_layout()
    return [_save(fig, out / "overview.png")]


def _transport(out: Path) -> list[Path]:
    subdirs = sorted(p for p in out.iterdir() if p.is_dir() and (p / "transport.csv").exists())
    if not subdirs:
        raise FileNotFoundError(f"missing inputs in {out}: eps_*/transport.csv")
    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    for sub in subdirs:
        d = read_csv(sub / "transport.csv")
        label = sub.name.replace("eps_", "eps=")
        axes[0].plot(d["t"], d["N_L"], label=f"N_L {label}")
        axes[0].plot(d["t"], d["N_R"], "--", label=f"N_R {label}")
        axes[1].plot(d["t"], d["z"], label=label)
        axes[2].plot(d["t"], d["N_chain"], label=label)
    axes[0].set_title("ring populations")
    axes[1].set_title("z(t)")
    axes[2].set_title("chain population")
    for ax in axes:
        ax.set_xlabel("t")
        ax.legend(fontsize=7)
    fig.tight_layout()
    return [_save(fig, out / "overview.png")]


def _lyapunov(out: Path) -> list[Path]:
    files = sorted(out.glob("sweep_*.csv"))
    if not files:
        raise FileNotFoundError(f"missing inputs in {out}: sweep_*.csv")
    fig, axes = plt.subplots(1, len(files), figsize=(4.5 * len(files), 4), squeeze=False)
    for ax, f in zip(axes[0], files):
        d = read_csv(f)
        x = d["E_K"] if f.stem.startswith("sweep_beta") else d["value"]
        ax.errorbar(x, d["lambda_mean"], yerr=d["stderr"], fmt="o-")
        ax.set_xlabel("E_K" if f.stem.startswith("sweep_beta") else f.stem.removeprefix("sweep_"))
        ax.set_ylabel("mean lambda")
        ax.set_title(f.stem)
    fig.tight_layout()
    return [_save(fig, out / "overview.png")]


_RENDERERS = {"relax": _relax, "equilibrate": _equilibrate, "transport": _transport, "lyapunov": _lyapunov}


def render_charts(out_dir) -> list[Path]:
    """Draw the charts for the run stored in ``out_dir`` and return their paths.

    Raises ``FileNotFoundError`` naming every expected file that is absent.
    """
    out = Path(out_dir)
    if not (out / "manifest.json").exists():
        raise FileNotFoundError(f"missing inputs in {out}: " + ", ".join(expected_inputs(None) + ["<run CSV files>"]))
    kind = json.loads((out / "manifest.json").read_text())["scenario"]["kind"]
    missing = _missing(out, expected_inputs(kind))
    if missing:
        raise FileNotFoundError(f"missing inputs in {out}: " + ", ".join(missing))
    return _RENDERERS[kind](out)
