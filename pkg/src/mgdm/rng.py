"""Seeded random streams.

Streams are numpy ``Philox`` (counter-based) generators keyed by a 64-bit
seed plus a tuple of integer tags, so independent purposes (data, batch
plans, shuffles) never share a stream.  Normal draws use the Box-Muller
transform over the stream's uniforms.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# stream tags
DATA = 1
PLAN = 2
SHUFFLE_SCAN = 3
SUBSAMPLE = 4


def stream(seed, *tags):
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.Philox(ss))


def replication_seed(master, index):
    """Per-replication seed; independent of scheduling order."""
    return (int(master) ^ int(index)) & MASK64


def box_muller(rng, size):
    """``size`` i.i.d. standard normals from pairs of uniforms."""
    n = int(np.prod(size))
    k = (n + 1) // 2
    u1 = 1.0 - rng.random(k)  # (0, 1]
    u2 = rng.random(k)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * k)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:n].reshape(size)
