"""Figures for a finished run directory: every known CSV found there gets a PNG next to it.

    uv run python docs/plots.py out/run
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_nb(df: pd.DataFrame, path: Path, title: str):
    fig, ax = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    ax[0].plot(df["t"], df["N_b"])
    ax[0].set_yscale("log")
    ax[0].set_xlabel(r"$\omega_m t$")
    ax[0].set_ylabel(r"$N_b$")
    ax[0].set_title(title)
    for column in [c for c in df.columns if c.startswith("N_b_")]:
        ax[1].plot(df["t"], df[column], label=column.removeprefix("N_b_"))
    ax[1].set_xlabel(r"$\omega_m t$")
    ax[1].legend()
    ax[1].grid()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ncl(df: pd.DataFrame, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(df["t"], df["N_cl_per_c1"], label=r"$N_{cl}/c_1$")
    ax.plot(df["t"], df["N_cl_per_c2"], "--", label=r"$N_{cl}/c_2$")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel(r"$\omega_m t$")
    ax.legend()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_oracle(df: pd.DataFrame, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(df["t"], df["N_b_kernel"], label="kernel")
    ax.plot(df["t"], df["N_b_oracle"], "--", label="finite bath")
    ax.set_xlabel(r"$\omega_m t$")
    ax.set_ylabel(r"$N_b$")
    ax.twinx().plot(df["t"], df["abs_rel_diff"], "r:", label="rel. diff")
    ax.legend()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_scan(df: pd.DataFrame, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    sc = ax.scatter(df["t_min"], df["N_b_min"], c=df["re_c1"] - df["re_c2"], cmap="coolwarm")
    fig.colorbar(sc, ax=ax, label=r"Re $c_1$ - Re $c_2$")
    ax.set_xlabel(r"$t_{min}$")
    ax.set_ylabel(r"$N_b$ at $t_{min}$")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main(directory: str):
    out = Path(directory)
    plotters = {
        "nb.csv": lambda df, p: plot_nb(df, p, "cooling run"),
        "qswitch.csv": lambda df, p: plot_nb(df, p, "Q-switch"),
        "ncl.csv": plot_ncl,
        "oracle_diff.csv": plot_oracle,
        "scan.csv": plot_scan,
    }
    for name, plot in plotters.items():
        csv = out / name
        if csv.is_file():
            plot(pd.read_csv(csv), csv.with_suffix(".png"))
            print(f"wrote {csv.with_suffix('.png')}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "out")
