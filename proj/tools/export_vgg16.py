#!/usr/bin/env python3
"""Write ImageNet VGG16 trunk weights (features.0 .. features.14) as a checkpoint
container for the perceptual loss. Point STARNET_VGG16_WEIGHTS at the output.

    python tools/export_vgg16.py vgg16.ckpt
    python tools/export_vgg16.py vgg16.ckpt --state-dict vgg16-397923af.pth
"""

import argparse
import json
import struct

import numpy as np
import torch

FORMAT = "starnet-v1"
LAST_LAYER = 15  # relu3_3


def load_state(path):
    if path:
        return torch.load(path, map_location="cpu")
    import torchvision

    return torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1).state_dict()


def write_container(path, tensors):
    entries, blobs, offset = [], [], 0
    for name, t in tensors:
        data = np.ascontiguousarray(t.detach().cpu().numpy().astype("<f4"))
        entries.append({"dtype": "float32", "name": name, "nbytes": data.nbytes, "offset": offset,
                        "shape": list(data.shape)})
        offset += data.nbytes
        blobs.append(data.tobytes())
    header = json.dumps({"config": "", "epoch": 0, "format": FORMAT, "state": {}, "step": 0, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(FORMAT.encode() + b"\n")
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--state-dict", help="local torchvision VGG16 state dict instead of downloading")
    args = ap.parse_args()

    state = load_state(args.state_dict)
    keep = []
    for key, value in state.items():
        parts = key.split(".")
        if parts[0] == "features" and int(parts[1]) < LAST_LAYER:
            keep.append((key, value))
    if len(keep) != 14:
        raise SystemExit(f"expected 7 conv layers below features.{LAST_LAYER}, found {len(keep) // 2}")
    write_container(args.out, keep)
    print(f"wrote {len(keep)} tensors to {args.out}")


if __name__ == "__main__":
    main()
