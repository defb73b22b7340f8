#!/usr/bin/env python3
"""Build a tiny YOLOX-shaped ONNX model for backend tests.

The network mimics the exported YOLOX graph layout: input ``images`` as
1x3xHxW BGR in [0, 255], a raw head output ``output`` of shape 1xNx(5+C)
(box regressions raw, objectness and class scores already sigmoided) and
named intermediate outputs for the backbone (dark3/4/5) and neck (p3/4/5).

Weights of the backbone are seeded random; the head is hand-set so that a
saturated red 32x32 block aligned to the stride-32 grid yields one "cup"
detection and a green block yields one "person" detection.
"""
import argparse

import torch
import torch.nn as nn
import torch.nn.functional as F

NUM_CLASSES = 2  # 0: person, 1: cup
STRIDES = (8, 16, 32)


class TinyYolox(nn.Module):
    def __init__(self):
        super().__init__()
        g = torch.Generator().manual_seed(1234)

        def conv(cin, cout, stride):
            c = nn.Conv2d(cin, cout, 3, stride, 1)
            with torch.no_grad():
                c.weight.copy_(torch.randn(c.weight.shape, generator=g) * (1.0 / (3 * cin) ** 0.5))
                c.bias.copy_(torch.randn(c.bias.shape, generator=g) * 0.1)
            return c

        self.stem = conv(3, 8, 2)
        self.dark2 = conv(8, 8, 2)
        self.dark3 = conv(8, 16, 2)
        self.dark4 = conv(16, 16, 2)
        self.dark5 = conv(16, 32, 2)
        self.lat3 = nn.Conv2d(16, 8, 1)
        self.lat4 = nn.Conv2d(16, 8, 1)
        self.lat5 = nn.Conv2d(32, 8, 1)
        for m in (self.lat3, self.lat4, self.lat5):
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=g) * 0.2)
                m.bias.zero_()

        # Head: 1x1 conv over the stride-pooled BGR input.
        self.heads = nn.ModuleList(nn.Conv2d(3, 5 + NUM_CLASSES, 1) for _ in STRIDES)
        with torch.no_grad():
            for level, head in enumerate(self.heads):
                head.weight.zero_()
                head.bias.zero_()
                active = STRIDES[level] == 32
                # objectness: fires on strongly saturated red or green cells
                head.weight[4, 1, 0, 0] = 0.05  # G
                head.weight[4, 2, 0, 0] = 0.05  # R
                head.weight[4, 0, 0, 0] = -0.05  # B
                head.bias[4] = -8.0 if active else -40.0 - level
                # keeps per-level initializers distinct so the exporter does not alias them
                head.weight[3, 0, 0, 0] = 1e-6 * (level + 1)
                # class 0 (person) ~ green dominance, class 1 (cup) ~ red dominance
                head.weight[5, 1, 0, 0] = 0.05
                head.weight[5, 2, 0, 0] = -0.05
                head.weight[6, 2, 0, 0] = 0.05
                head.weight[6, 1, 0, 0] = -0.05

    def forward(self, images):
        x = F.silu(self.stem(images / 255.0))
        x = F.silu(self.dark2(x))
        d3 = F.silu(self.dark3(x))
        d4 = F.silu(self.dark4(d3))
        d5 = F.silu(self.dark5(d4))
        p3 = self.lat3(d3)
        p4 = self.lat4(d4)
        p5 = self.lat5(d5)
        outs = []
        for stride, head in zip(STRIDES, self.heads):
            pooled = F.avg_pool2d(images, stride, stride)
            h = head(pooled)
            reg, obj, cls = h[:, :4], h[:, 4:5].sigmoid(), h[:, 5:].sigmoid()
            level = torch.cat([reg, obj, cls], 1)
            outs.append(level.flatten(start_dim=2))
        output = torch.cat(outs, 2).permute(0, 2, 1)
        return output, d3, d4, d5, p3, p4, p5


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--out", default="tiny_yolox.onnx")
    args = ap.parse_args()
    model = TinyYolox().eval()
    dummy = torch.zeros(1, 3, args.size, args.size)
    torch.onnx.export(
        model,
        dummy,
        args.out,
        input_names=["images"],
        output_names=["output", "backbone.dark3", "backbone.dark4", "backbone.dark5",
                      "neck.p3", "neck.p4", "neck.p5"],
        opset_version=11,
        dynamo=False,
    )
    inline_initializer_aliases(args.out)


def inline_initializer_aliases(path):
    """Replace Identity(initializer) nodes with copies of the initializer.

    The TorchScript exporter deduplicates equal constants through Identity
    nodes, which older OpenCV dnn importers reject.
    """
    import onnx

    model = onnx.load(path)
    graph = model.graph
    inits = {t.name: t for t in graph.initializer}
    keep = []
    for node in graph.node:
        if node.op_type == "Identity" and node.input[0] in inits:
            alias = onnx.TensorProto()
            alias.CopyFrom(inits[node.input[0]])
            alias.name = node.output[0]
            graph.initializer.append(alias)
        else:
            keep.append(node)
    del graph.node[:]
    graph.node.extend(keep)
    onnx.checker.check_model(model)
    onnx.save(model, path)


if __name__ == "__main__":
    main()
