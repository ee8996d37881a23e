"""Finite-chain entries P_{m,n}(t) against the limiting coefficients d_n(t) as m grows.

Writes ``coefficient_limit.txt`` with columns ``m theta t n P_mn d_n gap m*gap``.
The last column settling to a constant shows the O(1/m) rate.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from lodpd.cli import fmt
from lodpd.lod_coefficients import d_coefficient, p_mn_closed_form


@dataclass
class Config:
    thetas: list[float] = field(default_factory=lambda: [-0.5, 1.0, 5.0])
    times: list[float] = field(default_factory=lambda: [0.5, 1.0, 5.0])
    ns: list[int] = field(default_factory=lambda: [2, 3, 5])
    ms: list[int] = field(default_factory=lambda: [25, 50, 100, 200, 400, 800])
    out: Path = Path("results")


def main(cfg: Config) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for theta in cfg.thetas:
        for t in cfg.times:
            for n in cfg.ns:
                d = d_coefficient(theta, t, n)
                for m in cfg.ms:
                    p = p_mn_closed_form(theta, m, n, t)
                    rows.append((m, theta, t, n, p, d, abs(p - d), m * abs(p - d)))
    path = cfg.out / "coefficient_limit.txt"
    with open(path, "w") as fh:
        fh.write("# m theta t n P_mn d_n gap m_times_gap\n")
        for r in rows:
            fh.write(" ".join(fmt(v) for v in r) + "\n")
    print(f"wrote {len(rows)} rows to {path}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Config.out)
    main(Config(out=ap.parse_args().out))
