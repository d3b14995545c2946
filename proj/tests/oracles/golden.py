#!/usr/bin/env python3
"""Independent reference values for the C++ tests.

Reimplements the portable generator, the hashed n-gram text encoder and one
rendered reconstruction example from their documented definitions, then
writes tests/data/golden.json. Run from the repository root.
"""
import json
import math
import os

M64 = (1 << 64) - 1


def mix64(x):
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & M64
    x ^= x >> 31
    return x


def fnv1a64(data: bytes):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & M64
    return h


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M64


class Xoshiro:
    def __init__(self, seed):
        state = seed
        self.s = []
        for _ in range(4):
            state = (state + 0x9E3779B97F4A7C15) & M64
            self.s.append(mix64(state))

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & M64, 7) * 9) & M64
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result


def hashed_mean(text: str, dim: int, seed: int, max_n: int = 3):
    data = text.encode()
    sh = mix64(seed)
    rows = []
    for t in range(len(data)):
        acc = [0.0] * dim
        for n in range(1, min(max_n, t + 1) + 1):
            g = fnv1a64(data[t - n + 1 : t + 1])
            for j in range(dim):
                u = mix64(sh ^ ((g + 0x9E3779B97F4A7C15 * (j + 1)) & M64))
                acc[j] += (u >> 11) * 2.0**-53 * 2.0 - 1.0
        rows.append([math.tanh(a) for a in acc])
    return [sum(r[j] for r in rows) / len(rows) for j in range(dim)]


def byte_tokens(s: str):
    return ["<0x%02X>" % b for b in s.encode()]


def main():
    rng = Xoshiro(42)
    golden = {
        "rng_seed42_first5": [str(rng.next()) for _ in range(5)],
        "hashed_ngram": {
            "text": "red lipstick",
            "dim": 16,
            "seed": 17,
            "mean": hashed_mean("red lipstick", 16, 17),
        },
        # Index-to-text reconstruction, template 0, for an item whose index
        # tokens are <s_0_1> <s_1_0> <b_0_2> <b_1_3> and title "Red Lipstick".
        "semrecon_index_to_text": {
            "tokens": ["<bos>"] + byte_tokens("title of ")
            + ["<s_0_1>", "<s_1_0>", "<b_0_2>", "<b_1_3>"]
            + byte_tokens(" = ") + byte_tokens("Red Lipstick"),
            "loss_from": 1 + len("title of ") + 4 + len(" = "),
        },
    }
    out = os.path.join(os.path.dirname(__file__), "..", "data", "golden.json")
    with open(out, "w") as f:
        json.dump(golden, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
