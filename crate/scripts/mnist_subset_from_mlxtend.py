#!/usr/bin/env python3
"""Write the 5000-image MNIST subset shipped inside the mlxtend wheel as IDX files.

    pip download --no-deps mlxtend==0.24.0 -d /tmp/mlx
    python3 scripts/mnist_subset_from_mlxtend.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/mnist-5k

Row order of the CSV is preserved, so `source_index` in the loader refers to
the line number of mnist_5k.csv.gz.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main(wheel: str, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().strip().split("\n")

    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        values = [int(float(v)) for v in row.split(",")]
        assert len(values) == 785
        pixels.extend(bytes(values[:784]))
        labels.append(values[784])

    n = len(rows)
    (out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + pixels)
    (out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
