#!/usr/bin/env python3
"""Write a small labeled PNG subset plus manifest.csv for canon-engine.

Two sources are supported, both already on disk (nothing is downloaded):

  --cifar-batch PATH   a CIFAR-10/100 "python version" batch file (pickle with
                       b"data" and b"labels" or b"fine_labels"); class names are
                       read from batches.meta / meta next to it when present.
  --folder DIR         DIR/<class name>/<image files>; classes sorted by name.

The output directory gets images/<id>.png, manifest.csv (id,path,label) and
class_names.txt (one name per line, for [dataset] class_names).

Selection is stratified: --per-class images from each of the first --classes
classes, in a seeded random order.
"""

import argparse
import csv
import pickle
import random
import sys
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".webp"}


def load_cifar(batch_path):
    with open(batch_path, "rb") as f:
        batch = pickle.load(f, encoding="bytes")
    data = np.asarray(batch[b"data"], dtype=np.uint8).reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    labels = batch.get(b"labels", batch.get(b"fine_labels"))
    if labels is None:
        sys.exit(f"{batch_path}: no labels in batch")
    names = None
    for meta_name, key in (("batches.meta", b"label_names"), ("meta", b"fine_label_names")):
        meta = Path(batch_path).with_name(meta_name)
        if meta.exists():
            with open(meta, "rb") as f:
                names = [n.decode() for n in pickle.load(f, encoding="bytes")[key]]
            break
    if names is None:
        names = [f"class{i}" for i in range(max(labels) + 1)]
    samples = [(lambda i=i: Image.fromarray(data[i]), int(labels[i])) for i in range(len(labels))]
    return samples, names


def load_folder(root):
    root = Path(root)
    names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not names:
        sys.exit(f"{root}: no class subdirectories")
    samples = []
    for label, name in enumerate(names):
        for path in sorted((root / name).iterdir()):
            if path.suffix.lower() in IMAGE_SUFFIXES:
                samples.append((lambda p=path: Image.open(p), label))
    return samples, names


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--cifar-batch", type=Path)
    source.add_argument("--folder", type=Path)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--classes", type=int, default=10, help="use the first N classes")
    parser.add_argument("--per-class", type=int, default=10)
    parser.add_argument("--size", type=int, default=0, help="resize to SIZE x SIZE (0 keeps the source size)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    samples, names = load_cifar(args.cifar_batch) if args.cifar_batch else load_folder(args.folder)
    names = names[: args.classes]

    by_class = {label: [] for label in range(len(names))}
    for index, (_, label) in enumerate(samples):
        if label in by_class:
            by_class[label].append(index)
    rng = random.Random(args.seed)
    chosen = []
    for label, indices in by_class.items():
        rng.shuffle(indices)
        if len(indices) < args.per_class:
            print(f"warning: class {names[label]} has only {len(indices)} images", file=sys.stderr)
        chosen.extend(indices[: args.per_class])
    chosen.sort()

    images = args.out / "images"
    images.mkdir(parents=True, exist_ok=True)
    with open(args.out / "manifest.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "path", "label"])
        for index in chosen:
            opener, label = samples[index]
            img = opener().convert("RGB")
            if args.size > 0:
                img = img.resize((args.size, args.size), Image.BILINEAR)
            image_id = f"{names[label]}-{index:06d}"
            img.save(images / f"{image_id}.png")
            writer.writerow([image_id, f"images/{image_id}.png", label])
    (args.out / "class_names.txt").write_text("".join(n + "\n" for n in names))
    print(f"wrote {len(chosen)} images, {len(names)} classes -> {args.out / 'manifest.csv'}", file=sys.stderr)


if __name__ == "__main__":
    main()
