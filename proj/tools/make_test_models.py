#!/usr/bin/env python3
"""Generate the tiny ONNX detectors used by the inference tests.

Each graph mimics the exported anchor-free detector signature:
input `images` (1,3,S,S) float32 -> output `output0` (1, 4+C, (S/32)^2).
The conv weights are zero, so every anchor emits the conv bias verbatim.
"""
import sys
from pathlib import Path

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper


def build(num_classes, bias, size=640, stride=32):
    cells = (size // stride) ** 2
    channels = 4 + num_classes
    weight = np.zeros((channels, 3, 1, 1), dtype=np.float32)
    nodes = [
        helper.make_node("AveragePool", ["images"], ["pooled"],
                         kernel_shape=[stride, stride], strides=[stride, stride]),
        helper.make_node("Conv", ["pooled", "w", "b"], ["feat"], kernel_shape=[1, 1]),
        helper.make_node("Reshape", ["feat", "shape"], ["output0"]),
    ]
    inits = [
        numpy_helper.from_array(weight, "w"),
        numpy_helper.from_array(np.asarray(bias, dtype=np.float32), "b"),
        numpy_helper.from_array(np.array([1, channels, cells], dtype=np.int64), "shape"),
    ]
    graph = helper.make_graph(
        nodes, "detector",
        [helper.make_tensor_value_info("images", TensorProto.FLOAT, [1, 3, size, size])],
        [helper.make_tensor_value_info("output0", TensorProto.FLOAT, [1, channels, cells])],
        inits)
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    return model


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # One box centred at (320,320), 64x32, class 6 at 0.9.
    bias = np.zeros(38, dtype=np.float32)
    bias[:4] = [320, 320, 64, 32]
    bias[4 + 6] = 0.9
    onnx.save(build(34, bias), out / "fixed_box_34.onnx")

    onnx.save(build(80, np.zeros(84, dtype=np.float32)), out / "coco_80.onnx")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
