#!/usr/bin/env python3
"""Plot the CSV files written by `gw-extinct reproduce`.

    gw-extinct reproduce all --out-dir figs
    python3 scripts/plot_figures.py figs
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

SEQUENCE_COLUMNS = {
    "q_tilde": r"$\tilde q_1^{(k)}$",
    "q": r"$q_1^{(k)}$",
    "q_bar_e1": r"$\bar q_1^{(k)}$, $e_1$",
    "q_bar_uniform": r"$\bar q_1^{(k)}$, $1/k$",
    "q_bar_ek": r"$\bar q_1^{(k)}$, $e_k$",
}


def plot_sequence(path: Path) -> None:
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for col, label in SEQUENCE_COLUMNS.items():
        ax.plot(df["k"], df[col], marker=".", linewidth=0.8, label=label)
    ax.set_xlabel("k")
    ax.set_title(path.stem)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    plt.close(fig)


def plot_surface(path: Path) -> None:
    df = pd.read_csv(path)
    a = np.sort(df["a"].unique())
    b = np.sort(df["b"].unique())
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), subplot_kw={"projection": "3d"})
    for ax, z in zip(axes, ["z1", "z2", "z3"]):
        grid = df.pivot(index="b", columns="a", values=z).loc[b, a].to_numpy()
        A, B = np.meshgrid(a, b)
        ax.plot_surface(A, B, grid, cmap="viridis")
        ax.set_xlabel("a")
        ax.set_ylabel("b")
        ax.set_title(z)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    plt.close(fig)


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
    for path in sorted(out_dir.glob("fig*.csv")):
        if path.stem == "fig3":
            plot_surface(path)
        else:
            plot_sequence(path)
        print(f"wrote {path.with_suffix('.png')}")


if __name__ == "__main__":
    main()
