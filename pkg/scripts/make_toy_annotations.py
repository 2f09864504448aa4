#!/usr/bin/env python3
"""Write a small synthetic COCO-style annotation file for offline experiments.

Usage:
  python scripts/make_toy_annotations.py --out toy_annotations.json --images 10 --seed 7
"""

import argparse
import json

from sgsynth.toydata import make_toy_coco


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    payload = make_toy_coco(num_images=args.images, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    print(f"wrote {args.images} images / {len(payload['annotations'])} annotations to {args.out}")


if __name__ == "__main__":
    main()
