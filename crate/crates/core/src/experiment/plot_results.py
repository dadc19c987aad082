#!/usr/bin/env python3
"""Renders the CSV files written by `warpsep eval` in this directory.

Usage: python3 plot_results.py [output.png]
Needs numpy and matplotlib.
"""
import csv
import glob
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))


def read_table(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for r in body:
        for h, v in zip(header, r):
            cols[h].append(float(v) if v != "" else np.nan)
    return header, {h: np.array(v) for h, v in cols.items()}


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "results.png")
    scalograms = sorted(glob.glob(os.path.join(HERE, "scalogram_observation_*.csv")))
    fig, axes = plt.subplots(2 + len(scalograms), 1, figsize=(9, 4 * (2 + len(scalograms))))

    header, amari = read_table("amari_curves.csv")
    for label in header[2:]:
        axes[0].semilogy(amari["time"], np.maximum(amari[label], 1e-16), label=label)
    axes[0].set_xlabel("time (s)")
    axes[0].set_ylabel("Amari index")
    axes[0].legend()

    header, conv = read_table("convergence.csv")
    for label in header[1:]:
        if np.any(np.isfinite(conv[label])):
            axes[1].plot(conv["iteration"], conv[label], marker="o", label=label)
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("convergence criterion (dB)")
    if len(header) > 1:
        axes[1].legend()

    _, times = read_table("scalogram_times.csv")
    _, freqs = read_table("scalogram_frequencies.csv")
    for ax, path in zip(axes[2:], scalograms):
        m = np.loadtxt(path, delimiter=",", ndmin=2)
        ax.pcolormesh(times["time"], freqs["frequency_hz"], m, shading="auto")
        ax.set_yscale("log")
        ax.set_ylabel("frequency (Hz)")
        ax.set_xlabel("time (s)")
        ax.set_title(os.path.basename(path))

    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
