"""Optional matplotlib rendering of the CSV artifacts (opt-in via --plot)."""

from __future__ import annotations

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .mesh import Mesh


def render_heatmap(mesh: Mesh, values: np.ndarray, path: str, title: str = "u") -> None:
    nx = mesh.nx
    grid = values.reshape(nx, nx)
    xs = mesh.coords[:nx, 0]
    fig, ax = plt.subplots(figsize=(6.4, 5.4))
    im = ax.pcolormesh(xs, xs, grid, shading="nearest", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_profiles(profiles: dict, path: str) -> None:
    """profiles: label -> (x, u) arrays."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (xs, us) in profiles.items():
        ax.plot(xs, us, label=label, lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_radial(r, v, lower, upper, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(r, v, label="v_a(r)", lw=1.4)
    ax.fill_between(r, lower, upper, alpha=0.25, label="envelope")
    ax.set_xlabel("r")
    ax.set_ylabel("v")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_trace(trace, path: str) -> None:
    it = [row[0] for row in trace]
    gn = [row[2] for row in trace]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(it, gn, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("|grad|_inf")
    ax.grid(alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
