#!/usr/bin/env python3
# Converter check on small synthetic ind.* pickles; the CLI then loads the bundle.
# Exits 77 (skip) when numpy or scipy is missing.

import os
import pickle
import subprocess
import sys
import tempfile

try:
    import numpy as np
    import scipy.sparse as sp
except ImportError:
    sys.exit(77)

converter, cli = sys.argv[1], sys.argv[2]


def write_raw(raw, rng, n_labelled=550, n_test=100, d=5, c=3, n_train=6):
    allx = sp.csr_matrix(rng.integers(0, 3, (n_labelled, d)).astype(float))
    ally = np.eye(c)[rng.integers(0, c, n_labelled)]
    tx = sp.csr_matrix(rng.integers(0, 3, (n_test, d)).astype(float))
    ty = np.eye(c)[rng.integers(0, c, n_test)]
    test_index = rng.permutation(n_test) + n_labelled
    n = n_labelled + n_test
    graph = {i: [(i + 1) % n, (i + 7) % n, i] for i in range(n)}
    objs = dict(x=allx[:n_train], y=ally[:n_train], tx=tx, ty=ty, allx=allx, ally=ally, graph=graph)
    for key, value in objs.items():
        with open(os.path.join(raw, f"ind.fake.{key}"), "wb") as f:
            pickle.dump(value, f)
    with open(os.path.join(raw, "ind.fake.test.index"), "w") as f:
        f.write("\n".join(map(str, test_index)) + "\n")
    return objs, test_index


def check(cond, what):
    if not cond:
        print("FAIL:", what)
        sys.exit(1)


with tempfile.TemporaryDirectory() as tmp:
    raw, out = os.path.join(tmp, "raw"), os.path.join(tmp, "out")
    os.makedirs(raw)
    objs, test_index = write_raw(raw, np.random.default_rng(0))
    subprocess.run([sys.executable, converter, "--raw", raw, "--name", "fake", "--out", out, "--no-normalize"],
                   check=True, stderr=subprocess.DEVNULL)

    features = np.loadtxt(os.path.join(out, "features"))
    labels = np.loadtxt(os.path.join(out, "labels"), dtype=int)
    masks = open(os.path.join(out, "masks")).read().split()
    # test.index[j] names the node that owns row j of tx/ty
    check(np.allclose(features[test_index], objs["tx"].toarray()), "test feature rows")
    check((labels[test_index] == objs["ty"].argmax(1)).all(), "test labels")
    check(np.allclose(features[:550], objs["allx"].toarray()), "labelled feature rows")
    check({s: masks.count(s) for s in ("train", "val", "test", "none")} ==
          {"train": 6, "val": 500, "test": 100, "none": 44}, "split counts")
    edges = [tuple(map(int, line.split())) for line in open(os.path.join(out, "edges"))]
    check(all(u < v for u, v in edges), "edges are u < v without self-loops")
    check(len(edges) == len(set(edges)) == 1300, "edge count")

    normed = os.path.join(tmp, "normed")
    subprocess.run([sys.executable, converter, "--raw", raw, "--name", "fake", "--out", normed],
                   check=True, stderr=subprocess.DEVNULL)
    rows = np.loadtxt(os.path.join(normed, "features")).sum(axis=1)
    check(np.allclose(rows[rows > 0], 1.0), "row-normalized features")

    ws = os.path.join(tmp, "ws")
    report = subprocess.run([cli, "--workspace", ws, "generate", "preset=bundle", f"bundle={out}"],
                            check=True, capture_output=True, text=True).stdout
    check('"num_nodes": 650' in report and '"num_edges": 1300' in report, "CLI loads the bundle")

print("ok")
