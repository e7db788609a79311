"""PNG renderings of CLI report data (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def probe_trace(values, path: Path) -> Path:
    """sign(R) · log10(1 + |R̃|/scale) against m; the sign flip is the point of interest."""
    m = np.array([v.m for v in values])
    rel = np.array([v.scaled / v.scale if v.scale > 0 else 0.0 for v in values])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(m, rel, "o-", base=2)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("m")
    ax.set_ylabel("R(m) / scale")
    ax.set_title("probe functional")
    return _save(fig, path)


def monotone_minima(minima, limit: float, c: float, path: Path) -> Path:
    j = np.arange(1, len(minima) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(j, minima, "o-", label="phi_j")
    ax.axhline(limit, color="C1", ls="--", label="limit")
    ax.axhline(c, color="k", lw=0.8, label="c")
    ax.set_xlabel("j")
    ax.set_ylabel("min q-sum")
    ax.legend()
    return _save(fig, path)


def base_scatter(points, values, path: Path, label: str) -> Path:
    """Values at base points in the (x_1, y_1) plane."""
    z = np.asarray(points)[:, 0]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    sc = ax.scatter(z.real, z.imag, c=values, s=12, cmap="viridis")
    fig.colorbar(sc, ax=ax, label=label)
    ax.set_xlabel("x1")
    ax.set_ylabel("y1")
    ax.set_aspect("equal")
    return _save(fig, path)


def field_modulus(grid, values, path: Path) -> Path:
    """|u| on an n = 1 grid (or the z_2 = centre slice for n = 2)."""
    m = grid.points_per_axis
    mod = np.sqrt(np.sum(np.abs(values) ** 2, axis=-1))
    cube = mod.reshape((m,) * (2 * grid.n))
    if grid.n == 2:
        cube = cube[:, :, m // 2, m // 2]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ext = (grid.lower[0], grid.upper[0], grid.lower[1], grid.upper[1])
    im = ax.imshow(cube.T, origin="lower", extent=ext, cmap="magma")
    fig.colorbar(im, ax=ax, label="|u|")
    ax.set_xlabel("x1")
    ax.set_ylabel("y1")
    return _save(fig, path)
