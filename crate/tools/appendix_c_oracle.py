#!/usr/bin/env python3
"""Scalar-by-scalar evaluation of the two-unit chaotic LSTM.

Writes the golden trajectory used by the core crate's tests:

    python3 tools/appendix_c_oracle.py > crates/core/tests/data/appendix_c_golden.csv
"""
import math
import sys

W_HI = ((-1.0, 4.0), (-3.0, -2.0))
W_HF = ((-2.0, 6.0), (0.0, -6.0))
W_HG = ((-1.0, -6.0), (6.0, -9.0))
W_HO = ((4.0, 1.0), (-9.0, 7.0))


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def row(w, r, h0, h1):
    acc = 0.0
    acc += w[r][0] * h0
    acc += w[r][1] * h1
    return 0.0 + acc


def step(h0, h1, c0, c1):
    out = []
    for r, c in ((0, c0), (1, c1)):
        i = sigmoid(row(W_HI, r, h0, h1))
        f = sigmoid(row(W_HF, r, h0, h1))
        g = math.tanh(row(W_HG, r, h0, h1))
        o = sigmoid(row(W_HO, r, h0, h1))
        c_next = f * c + i * g
        out.append((o * math.tanh(c_next), c_next))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def main(steps=200):
    h0, h1, c0, c1 = 0.5, 0.5, 0.5, 0.5
    w = sys.stdout.write
    w("t,x0,x1,x2,x3,y0,y1\n")
    for t in range(steps):
        w(",".join([str(t)] + [repr(v) for v in (h0, h1, c0, c1, h0, h1)]) + "\n")
        h0, h1, c0, c1 = step(h0, h1, c0, c1)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
