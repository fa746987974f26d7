"""Smoke test of the Python bindings: match, generate, benchmark, train."""

import json
import math
import os
import sys
import tempfile

import lisrd


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "cfg.json")
        with open(cfg, "w") as f:
            json.dump(
                {
                    "metrics": {"image_width": 160, "image_height": 120},
                    "features": {"max_keypoints": 200},
                    "training": {
                        "triplets": 2,
                        "stage1_steps": 2,
                        "stage2_steps": 2,
                        "points_per_triplet": 16,
                        "image_width": 160,
                        "image_height": 120,
                    },
                },
                f,
            )

        w = lisrd.invariance_weights([0.0, 0.0, 0.0, 0.0])
        assert all(abs(v - 0.25) < 1e-12 for v in w), w
        w = lisrd.invariance_weights([1.0, 2.0, 3.0, 4.0])
        assert abs(sum(w) - 1.0) < 1e-12 and w[3] > w[0]
        a = [[1.0, 0.0]] * 4
        b = [[0.0, 1.0]] * 4
        d = lisrd.lisrd_distance(a, b, [0.25] * 4)
        assert abs(d - math.sqrt(2.0)) < 1e-6, d

        img = os.path.join(tmp, "scene.png")
        lisrd.synthetic_scene(160, 120, 1, img)
        n, precision = lisrd.match_images(img, img, os.path.join(tmp, "match"), "lisrd", cfg)
        assert n >= 1 and precision == 1.0, (n, precision)
        with open(os.path.join(tmp, "match", "matches.json")) as f:
            assert len(json.load(f)["pairs"]) == n

        manifest = lisrd.generate(os.path.join(tmp, "pairs"), 2, seed=3, config_path=cfg)
        report_path = lisrd.benchmark(str(manifest), os.path.join(tmp, "bench"), ["lisrd", "best_of_4"], cfg)
        with open(report_path) as f:
            report = json.load(f)
        assert report["modes"] == ["lisrd", "best_of_4"] and report["num_pairs"] == 2

        initial, final = lisrd.train(os.path.join(tmp, "train"), config_path=cfg)
        assert math.isfinite(initial) and math.isfinite(final)

        try:
            lisrd.match_images(os.path.join(tmp, "missing.png"), img, tmp)
        except ValueError:
            pass
        else:
            raise AssertionError("missing input accepted")

    print(f"smoke ok: {n} self matches, loss {initial:.4f} -> {final:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
