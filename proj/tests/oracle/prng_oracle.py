# Copyright 2026 The Duet Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent reference for the PRNG, native stream and synthetic dataset.

Writes tests/golden/prng_golden.json. The C++ tests compare against the
frozen file; rerun this script only when the generator definition changes.
"""
import json
import math
import pathlib

MASK = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(text):
    h = FNV_OFFSET
    for b in text.encode():
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


class XorShift64Star:
    def __init__(self, seed):
        self.s = seed & MASK or FNV_OFFSET

    def next_u64(self):
        s = self.s
        s ^= s >> 12
        s ^= (s << 25) & MASK
        s ^= s >> 27
        self.s = s
        return (s * 0x2545F4914F6CDD1D) & MASK

    def next_unit(self):
        return (self.next_u64() >> 11) / float(1 << 53)


def native_draw(seed, step, k):
    rng = XorShift64Star(seed ^ fnv1a64("native"))
    for _ in range(step * 31 + k):
        rng.next_u64()
    return rng.next_unit()


def synthetic(seed, name, occurrence, n):
    rng = XorShift64Star(seed ^ fnv1a64(name) ^ ((occurrence * GAMMA) & MASK))
    return [2.0 * rng.next_unit() - 1.0 for _ in range(n)]


def main():
    out = {
        "fnv1a64": {t: str(fnv1a64(t)) for t in ["", "a", "x", "native"]},
        "choice_4_0_seed7": [math.floor(native_draw(7, s, 0) * 4) for s in range(8)],
        "coin_3_seed0": [native_draw(0, s, 3) >= 0.5 for s in range(8)],
        "synthetic": [],
    }
    for seed, name, occ in [(0, "x", 0), (0, "x", 1), (7, "x", 0), (42, "flag", 3), (123456789, "batch", 17)]:
        out["synthetic"].append({"seed": seed, "name": name, "occurrence": occ, "data": synthetic(seed, name, occ, 6)})
    path = pathlib.Path(__file__).resolve().parent.parent / "golden" / "prng_golden.json"
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
