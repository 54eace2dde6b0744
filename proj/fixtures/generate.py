#!/usr/bin/env python3
"""Writes the bottleneck ResNet layer lists used as model files.

    python3 fixtures/generate.py fixtures/
"""
import json
import sys
from pathlib import Path


def conv(name, cin, cout, k, stride, pad, hw, block="", shortcut=False):
    e = {"name": name, "type": "conv"}
    if block:
        e["block"] = block
    e.update({"in": cin, "out": cout, "kernel": k, "stride": stride,
              "padding": pad, "groups": 1, "input_hw": hw, "bias": False})
    if shortcut:
        e["shortcut"] = True
    return e


def out_hw(hw, k, stride, pad):
    return (hw + 2 * pad - k) // stride + 1


def resnet(name, blocks, input_hw=224, stem=64, widths=(64, 128, 256, 512),
           stem_kernel=7, stem_stride=2, maxpool=True, classes=1001):
    layers = []
    pad = stem_kernel // 2
    layers.append(conv("conv1", 3, stem, stem_kernel, stem_stride, pad, input_hw))
    hw = out_hw(input_hw, stem_kernel, stem_stride, pad)
    layers.append({"name": "relu", "type": "relu"})
    if maxpool:
        hw = out_hw(hw, 3, 2, 1)
        layers.append({"name": "maxpool", "type": "pool", "output_hw": hw})
    cin = stem
    for stage, (n, planes) in enumerate(zip(blocks, widths), start=1):
        for b in range(n):
            blk = f"layer{stage}.{b}"
            stride = 2 if (b == 0 and stage > 1) else 1
            cout = 4 * planes
            # stride sits on the 3x3 conv and on the projection
            layers.append(conv(f"{blk}.conv1", cin, planes, 1, 1, 0, hw, blk))
            layers.append({"name": f"{blk}.relu1", "type": "relu", "block": blk, "foldable": True})
            layers.append(conv(f"{blk}.conv2", planes, planes, 3, stride, 1, hw, blk))
            layers.append({"name": f"{blk}.relu2", "type": "relu", "block": blk, "foldable": True})
            hw2 = out_hw(hw, 3, stride, 1)
            layers.append(conv(f"{blk}.conv3", planes, cout, 1, 1, 0, hw2, blk))
            if b == 0 and (stride != 1 or cin != cout):
                layers.append(conv(f"{blk}.downsample", cin, cout, 1, stride, 0, hw, blk, shortcut=True))
            layers.append({"name": f"{blk}.add", "type": "add", "block": blk})
            layers.append({"name": f"{blk}.relu3", "type": "relu", "block": blk})
            cin, hw = cout, hw2
    layers.append({"name": "avgpool", "type": "pool", "output_hw": 1})
    layers.append({"name": "fc", "type": "linear", "in": cin, "out": classes, "bias": True})
    return {"name": name, "input_channels": 3, "input_hw": input_hw, "layers": layers}


MODELS = {
    "resnet50": lambda: resnet("resnet50", (3, 4, 6, 3)),
    "resnet101": lambda: resnet("resnet101", (3, 4, 23, 3)),
    "resnet152": lambda: resnet("resnet152", (3, 8, 36, 3)),
    "tiny": lambda: resnet("tiny", (2, 1), input_hw=8, stem=16, widths=(8, 8),
                           stem_kernel=3, stem_stride=1, maxpool=False, classes=10),
}


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
    for name, build in MODELS.items():
        (out / f"{name}.json").write_text(json.dumps(build(), indent=1) + "\n")


if __name__ == "__main__":
    main()
