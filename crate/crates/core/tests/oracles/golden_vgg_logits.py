"""Independent forward pass for the VGG-style fixture.

Reads the manifest, the raw f32 weights, and the reference PNG written by
`cargo run --example generate_fixtures -- <dir> 2024`, evaluates the network
with numpy in float64, and prints a Rust literal for tests/data/vgg_golden.in:
SHA-256 of the weights file, the parameter count from manifest arithmetic,
and the logits.

    python3 tests/oracles/golden_vgg_logits.py <dir>/vgg
"""
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

root = Path(sys.argv[1])
manifest = json.loads((root / "vgg_style.json").read_text())
raw = (root / "vgg_style.bin").read_bytes()
weights = np.frombuffer(raw, dtype="<f4").astype(np.float64)

img = np.asarray(Image.open(root / "vgg_reference.png").convert("RGB"), dtype=np.float64)
c, h, w = manifest["input_shape"]
assert img.shape == (h, w, 3)
x = img.transpose(2, 0, 1) / 255.0
norm = manifest.get("normalization")
if norm:
    x = (x - np.array(norm["mean"])[:, None, None]) / np.array(norm["std"])[:, None, None]

offset = 0


def take(n):
    global offset
    out = weights[offset:offset + n]
    offset += n
    return out


def conv(x, cin, cout, k, stride, pad):
    wt = take(cout * cin * k * k).reshape(cout, cin, k, k)
    b = take(cout)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (xp.shape[1] - k) // stride + 1
    ow = (xp.shape[2] - k) // stride + 1
    out = np.empty((cout, oh, ow))
    for i in range(oh):
        for j in range(ow):
            patch = xp[:, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, i, j] = np.tensordot(wt, patch, axes=([1, 2, 3], [0, 1, 2])) + b
    return out


def maxpool(x, k, s):
    ch, hh, ww = x.shape
    oh, ow = (hh - k) // s + 1, (ww - k) // s + 1
    out = np.empty((ch, oh, ow))
    for i in range(oh):
        for j in range(ow):
            out[:, i, j] = x[:, i * s:i * s + k, j * s:j * s + k].reshape(ch, -1).max(axis=1)
    return out


params = 0
for layer in manifest["layers"]:
    kind = layer["kind"]
    if kind == "conv2d":
        k, cin, cout = layer["kernel"], layer["in_channels"], layer["out_channels"]
        params += cout * cin * k * k + cout
        x = conv(x, cin, cout, k, layer.get("stride", 1), layer.get("padding", 0))
    elif kind == "relu":
        x = np.maximum(x, 0.0)
    elif kind == "maxpool":
        x = maxpool(x, layer["kernel"], layer["stride"])
    elif kind == "flatten":
        x = x.reshape(-1)
    elif kind == "dense":
        fin, fout = layer["in_features"], layer["out_features"]
        params += fin * fout + fout
        wt = take(fin * fout).reshape(fout, fin)
        x = wt @ x + take(fout)
    elif kind == "softmax":
        pass
    else:
        raise SystemExit(f"unknown layer {kind}")

assert offset == len(weights) == params
digest = hashlib.sha256(raw).hexdigest()
print("(")
print(f'    "{digest}",')
print(f"    {params},")
print("    [" + ", ".join(repr(float(v)) for v in x) + "],")
print(")")
