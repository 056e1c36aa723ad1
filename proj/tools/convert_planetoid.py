#!/usr/bin/env python3
"""Convert a Planetoid dataset (ind.<name>.* files) into a pgx graph bundle.

The bundle is the directory layout read by `pgx generate preset=bundle
bundle=<dir>` and by the acceptance checks (PGX_CORA_DIR):

    meta      num_nodes=, num_classes=, feature_dim=
    edges     "u v" per undirected edge, u <= v
    features  one row of feature_dim numbers per node
    labels    one class id per node
    masks     train | val | test | none per node

The split is the standard public one: the first 20 labelled nodes per class
(the `y` rows) for training, the next 500 for validation, and the 1000 nodes
listed in test.index for testing.

usage: convert_planetoid.py --raw data/planetoid/raw --name cora --out data/cora
Needs numpy and scipy (the raw files are pickled scipy matrices).
"""

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load_raw(raw, name):
    objs = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        with open(os.path.join(raw, f"ind.{name}.{key}"), "rb") as f:
            objs[key] = pickle.load(f, encoding="latin1")
    with open(os.path.join(raw, f"ind.{name}.test.index")) as f:
        test_index = [int(line) for line in f if line.strip()]
    return objs, test_index


def assemble(objs, test_index, name):
    test_sorted = np.sort(test_index)
    tx, ty = objs["tx"], objs["ty"]
    if name == "citeseer":
        # some test ids are isolated nodes missing from tx/ty; pad with zeros
        full = range(min(test_index), max(test_index) + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - min(test_sorted), :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - min(test_sorted), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack((objs["allx"], tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    labels = np.vstack((objs["ally"], ty))
    labels[test_index, :] = labels[test_sorted, :]

    n = features.shape[0]
    split = ["none"] * n
    for i in range(len(objs["y"])):
        split[i] = "train"
    for i in range(len(objs["y"]), len(objs["y"]) + 500):
        split[i] = "val"
    for i in test_index:
        split[i] = "test"

    edges = set()
    for u, nbrs in objs["graph"].items():
        for v in nbrs:
            if u == v or u >= n or v >= n:
                continue
            edges.add((min(u, v), max(u, v)))
    return features.tocsr(), labels.argmax(axis=1), split, sorted(edges)


def write_bundle(out, features, labels, split, edges, num_classes, normalize):
    os.makedirs(out, exist_ok=True)
    dense = np.asarray(features.todense(), dtype=np.float64)
    if normalize:
        sums = dense.sum(axis=1, keepdims=True)
        sums[sums == 0] = 1.0
        dense = dense / sums
    n, d = dense.shape
    with open(os.path.join(out, "meta"), "w") as f:
        f.write(f"num_nodes={n}\nnum_classes={num_classes}\nfeature_dim={d}\n")
    with open(os.path.join(out, "edges"), "w") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    with open(os.path.join(out, "features"), "w") as f:
        for row in dense:
            f.write(" ".join(repr(float(x)) if x else "0" for x in row) + "\n")
    with open(os.path.join(out, "labels"), "w") as f:
        f.writelines(f"{int(y)}\n" for y in labels)
    with open(os.path.join(out, "masks"), "w") as f:
        f.writelines(f"{s}\n" for s in split)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", required=True, help="directory holding ind.<name>.* files")
    ap.add_argument("--name", default="cora")
    ap.add_argument("--out", required=True)
    ap.add_argument("--no-normalize", action="store_true", help="keep raw bag-of-words counts")
    args = ap.parse_args()

    objs, test_index = load_raw(args.raw, args.name)
    features, labels, split, edges = assemble(objs, test_index, args.name)
    num_classes = objs["y"].shape[1]
    write_bundle(args.out, features, labels, split, edges, num_classes, not args.no_normalize)
    counts = {s: split.count(s) for s in ("train", "val", "test")}
    print(f"{args.name}: {features.shape[0]} nodes, {len(edges)} edges, {num_classes} classes, "
          f"{features.shape[1]} features, split {counts}", file=sys.stderr)


if __name__ == "__main__":
    main()
