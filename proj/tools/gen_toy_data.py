#!/usr/bin/env python3
"""Regenerates the deterministic toy dataset (8 smooth 64x64 P6 images)."""
import math
import os

SIZE = 64
OUT = os.path.join(os.path.dirname(__file__), "..", "data", "toy")


def pixel(idx, y, x):
    u, v = x / (SIZE - 1), y / (SIZE - 1)
    r = 0.5 + 0.45 * math.sin(2 * math.pi * ((idx + 1) * u + 0.3 * v))
    g = 0.5 + 0.45 * math.cos(2 * math.pi * (0.7 * u + (idx + 2) * 0.5 * v))
    b = 0.5 + 0.35 * math.sin(2 * math.pi * (u * v * (idx + 1) + 0.1 * idx))
    ramp = 0.15 * (u + v) * ((idx % 3) - 1)
    return tuple(max(0, min(255, round(255 * (c + ramp)))) for c in (r, g, b))


def main():
    os.makedirs(OUT, exist_ok=True)
    for idx in range(8):
        body = bytearray()
        for y in range(SIZE):
            for x in range(SIZE):
                body.extend(pixel(idx, y, x))
        path = os.path.join(OUT, f"toy{idx:02d}.ppm")
        with open(path, "wb") as f:
            f.write(f"P6\n{SIZE} {SIZE}\n255\n".encode())
            f.write(bytes(body))
        print(path)


if __name__ == "__main__":
    main()
