#!/usr/bin/env python3
"""Export ImageNet backbone weights to the .cxrw container read by cxrbench.

    python3 tools/export_weights.py --backbone resnet50 --out weights/
    python3 tools/export_weights.py --backbone all --out weights/

ResNets and InceptionV3 come from torchvision, Inception-ResNetV2 from timm.
Classifier and auxiliary heads are dropped; BatchNorm running statistics are
kept. Pass the output directory to cxrbench as --weights_dir (or set
CXR_WEIGHTS_DIR).

--reference DIR instead writes randomly initialised weights for every backbone
together with an input batch and the pooled features torch computes for it, so
the C++ forward pass can be checked against torch. Exits 77 when torch is not
installed.
"""

import argparse
import struct
import sys
from pathlib import Path

BACKBONES = ["resnet50", "resnet101", "resnet152", "inceptionv3", "inception_resnetv2"]
DROPPED_PREFIXES = ("fc.", "AuxLogits.", "classif.")


def build(name, pretrained):
    import torchvision

    if name.startswith("resnet"):
        weights = "IMAGENET1K_V1" if pretrained else None
        return getattr(torchvision.models, name)(weights=weights)
    if name == "inceptionv3":
        if pretrained:
            return torchvision.models.inception_v3(weights="IMAGENET1K_V1")
        return torchvision.models.inception_v3(weights=None, aux_logits=True, init_weights=True)
    if name == "inception_resnetv2":
        import timm

        return timm.create_model("inception_resnet_v2", pretrained=pretrained)
    raise SystemExit(f"unknown backbone {name!r}; expected one of {', '.join(BACKBONES)} or all")


def backbone_tensors(model):
    out = {}
    for key, value in model.state_dict().items():
        if key.endswith("num_batches_tracked") or key.startswith(DROPPED_PREFIXES):
            continue
        out[key] = value.detach().float().contiguous().cpu()
    return out


def write_cxrw(path, tensors):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"CXRW")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name in sorted(tensors):
            t = tensors[name]
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            f.write(struct.pack(f"<{t.dim()}q", *t.shape))
            f.write(t.numpy().astype("<f4").tobytes())
    tmp.replace(path)


def pooled_features(name, model, batch):
    import torch

    model.eval()
    with torch.no_grad():
        if name == "inception_resnetv2":
            return model.forward_head(model.forward_features(batch), pre_logits=True)
        model.fc = torch.nn.Identity()
        if name == "inceptionv3":
            model.transform_input = False
            model.aux_logits = False
            model.AuxLogits = None
        return model(batch)


def export_reference(out_dir, seed):
    import torch

    for name in BACKBONES:
        if name == "inception_resnetv2":
            try:
                import timm  # noqa: F401
            except ImportError:
                print(f"skip {name}: timm not installed", file=sys.stderr)
                continue
        torch.manual_seed(seed)
        model = build(name, pretrained=False)
        # non-trivial running statistics so inference-mode BatchNorm is exercised
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                module.running_mean.uniform_(-0.1, 0.1)
                module.running_var.uniform_(0.5, 1.5)
                module.weight.data.uniform_(0.8, 1.2)
                module.bias.data.uniform_(-0.1, 0.1)
        side = 299 if name.startswith("inception") else 224
        batch = torch.rand(2, 3, side, side) * 2 - 1
        features = pooled_features(name, model, batch)
        write_cxrw(out_dir / f"{name}.cxrw", backbone_tensors(model))
        write_cxrw(out_dir / f"{name}_reference.cxrw", {"input": batch, "features": features.float()})
        print(f"{name}: features {tuple(features.shape)} -> {out_dir}")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--backbone", default="all", help="backbone name or 'all'")
    parser.add_argument("--out", type=Path, help="output directory for <backbone>.cxrw")
    parser.add_argument("--reference", type=Path, help="write random-init reference data here instead")
    parser.add_argument("--seed", type=int, default=2020)
    args = parser.parse_args()

    try:
        import torch  # noqa: F401
        import torchvision  # noqa: F401
    except ImportError:
        print("torch/torchvision not installed", file=sys.stderr)
        return 77

    if args.reference:
        export_reference(args.reference, args.seed)
        return 0
    if not args.out:
        parser.error("--out is required")
    names = BACKBONES if args.backbone == "all" else [args.backbone]
    for name in names:
        model = build(name, pretrained=True)
        tensors = backbone_tensors(model)
        write_cxrw(args.out / f"{name}.cxrw", tensors)
        print(f"{name}: {len(tensors)} tensors -> {args.out / (name + '.cxrw')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
