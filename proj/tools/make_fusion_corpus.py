#!/usr/bin/env python3
"""Writes the generator spec of the 20-video proposal-fusion benchmark.

    python3 tools/make_fusion_corpus.py > tests/fixtures/fusion_corpus.json
    mcmpg synth generate --spec tests/fixtures/fusion_corpus.json --out corpus/
"""
import json
import random
import sys

SHAPES = ["rectangle", "ellipse", "l_polyomino"]


def scene(rng, index):
    h, w, frames = 48, 64, 8
    cells = [(0, 0), (0, 1), (1, 0), (1, 1)]
    rng.shuffle(cells)
    objects = []
    for row, col in cells[: rng.randint(2, 4)]:
        cx = col * w / 2 + w / 4 + rng.uniform(-3, 3)
        cy = row * h / 2 + h / 4 + rng.uniform(-2, 2)
        obj = {
            "shape": rng.choice(SHAPES),
            "pose": {
                "cx": round(cx, 2),
                "cy": round(cy, 2),
                "width": rng.randint(11, 20),
                "height": rng.randint(10, 17),
                "angle_deg": rng.choice([0, 0, 15, 30]),
            },
        }
        if rng.random() < 0.4:
            obj["motion"] = {"dx": rng.choice([-0.5, 0.5]), "dy": rng.choice([-0.25, 0, 0.25])}
        objects.append(obj)
    return {
        "video_id": f"fusion_{index:02d}",
        "grid": {"h": h, "w": w},
        "frames": frames,
        "seed": index,
        "noise_seed": 1000 + index,
        "objects": objects,
    }


def main():
    rng = random.Random(20240517)
    spec = {
        "noise": {"hole_rate": 0.3, "boundary_jitter_radius": 2, "miss_rate": 0.1},
        "videos": [scene(rng, i) for i in range(20)],
    }
    json.dump(spec, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
