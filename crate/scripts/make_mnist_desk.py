#!/usr/bin/env python3
"""Rebuild data/mnist-desk/*.gz from the `mnist` npm package (10,000 MNIST digits).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_desk.py package/src/digits data/mnist-desk

Pixels in the package are stored as byte/255 rounded to three decimals, so
round(v * 255) recovers the original bytes.
"""
import gzip
import json
import random
import struct
import sys


def main(src, out):
    imgs, labels = [], []
    for digit in range(10):
        with open(f"{src}/{digit}.json") as f:
            flat = json.load(f)["data"]
        for k in range(len(flat) // 784):
            chunk = flat[k * 784:(k + 1) * 784]
            imgs.append(bytes(min(255, max(0, round(v * 255))) for v in chunk))
            labels.append(digit)
    order = list(range(len(labels)))
    random.Random(20201).shuffle(order)
    with gzip.GzipFile(f"{out}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(order), 28, 28))
        for i in order:
            f.write(imgs[i])
    with gzip.GzipFile(f"{out}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(order)))
        f.write(bytes(labels[i] for i in order))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
