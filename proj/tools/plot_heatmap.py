#!/usr/bin/env python3
"""Render a heatmap CSV written by `swarmnav heatmap` to a PNG."""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", type=Path)
    ap.add_argument("-o", "--output", type=Path)
    args = ap.parse_args()

    raw = np.genfromtxt(args.csv, delimiter=",", skip_header=0)
    ys = raw[0, 1:]
    xs = raw[1:, 0]
    delta = raw[1:, 1:]
    side = json.loads(args.csv.with_suffix(".json").read_text())
    clip = side.get("color_clip_deg", 10.0)

    fig, ax = plt.subplots(figsize=(6, 5))
    # x is north (up), y is east (right)
    im = ax.pcolormesh(ys, xs, delta, cmap="coolwarm", vmin=-clip, vmax=clip, shading="nearest")
    for a in side.get("fixed_agents", []):
        ax.plot(a["y_m"], a["x_m"], "ko")
        ax.arrow(a["y_m"], a["x_m"], 3 * np.sin(a["heading_rad"]), 3 * np.cos(a["heading_rad"]),
                 head_width=1.0, color="k")
    ax.set_xlabel("y (east) [m]")
    ax.set_ylabel("x (north) [m]")
    ax.set_aspect("equal")
    fig.colorbar(im, ax=ax, label="commanded heading change [deg]")
    out = args.output or args.csv.with_suffix(".png")
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(out)


if __name__ == "__main__":
    main()
