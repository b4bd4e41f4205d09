#!/usr/bin/env python3
"""Toy hard-label model speaking the line protocol on stdin/stdout.

Reads one TEN4 path per line and answers with a label. Modes:

    --const K         always answer K
    (default)         label 1 if the tensor mean exceeds --threshold, else 0
    --garbage-after N answer normally N times, then print junk
    --die-after N     exit after N answers
    --refuse-above V  exit at once if the first tensor's mean exceeds V
"""
import argparse
import sys

from tenad.io import read_ten4


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--const", type=int)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--garbage-after", type=int)
    p.add_argument("--die-after", type=int)
    p.add_argument("--refuse-above", type=float)
    args = p.parse_args()

    served = 0
    for line in sys.stdin:
        if args.die_after is not None and served >= args.die_after:
            return 1
        if args.garbage_after is not None and served >= args.garbage_after:
            print("not-a-label", flush=True)
            served += 1
            continue
        x = read_ten4(line.strip())
        if served == 0 and args.refuse_above is not None and x.mean() > args.refuse_above:
            return 1
        if args.const is not None:
            label = args.const
        else:
            label = int(x.mean() > args.threshold)
        print(label, flush=True)
        served += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
