"""Reference range-view coordinates at 50 significant digits.

Writes projection_fixture.csv: a header with the sensor parameters (as exact
float reprs) and one line per point `x,y,z,u,v`. Inputs are float64 values so
the Rust side parses bit-identical coordinates.
"""
import math
import random

import mpmath

mpmath.mp.dps = 50
W, H = 512, 64
PHI_UP = math.radians(3.0)
PHI_DOWN = math.radians(25.0)

rng = random.Random(20240611)


def reference(x, y, z):
    x, y, z = mpmath.mpf(x), mpmath.mpf(y), mpmath.mpf(z)
    az = mpmath.atan2(y, x)
    if az == -mpmath.pi:
        az = mpmath.pi
    d = mpmath.sqrt(x * x + y * y + z * z)
    up, down = mpmath.mpf(PHI_UP), mpmath.mpf(PHI_DOWN)
    u = mpmath.mpf(1) / 2 * (1 - az / mpmath.pi) * W
    v = (1 - (mpmath.asin(z / d) + down) / (up + down)) * H
    return u, v


def main():
    lines = [f"# W={W} H={H} phi_up={PHI_UP!r} phi_down={PHI_DOWN!r}"]
    for _ in range(1000):
        r = 10 ** rng.uniform(-1, 2)
        x, y = rng.uniform(-1, 1) * r, rng.uniform(-1, 1) * r
        z = rng.uniform(-0.5, 0.1) * r
        u, v = reference(x, y, z)
        lines.append(f"{x!r},{y!r},{z!r},{mpmath.nstr(u, 30)},{mpmath.nstr(v, 30)}")
    with open("projection_fixture.csv", "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
