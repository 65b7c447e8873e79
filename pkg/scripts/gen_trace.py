#!/usr/bin/env python3
"""Generate a synthetic malloc/free JSONL trace for the replay command.

Example:
    python scripts/gen_trace.py --events 100000 --seed 3 --out trace.jsonl
    clustertag replay --trace trace.jsonl
"""

import argparse
import json
import sys

import numpy as np

from clustertag.workload import synthesize_trace


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--min-size", type=int, default=0x10)
    parser.add_argument("--max-size", type=int, default=0x10000)
    parser.add_argument("--free-prob", type=float, default=0.5)
    parser.add_argument("--out", default="-", help="output path ('-' = stdout)")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        for event in synthesize_trace(rng, args.events, min_size=args.min_size,
                                      max_size=args.max_size,
                                      free_prob=args.free_prob):
            out.write(json.dumps(event) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    main()
