"""Network builders for the MLP, CNN, LSTM and ResNet families."""

import numpy as np

from .layers import (LSTM, AdaptiveAvgPool2D, BatchNorm2D, Conv2D, Dense, Dropout, Flatten,
                     MaxPool2D, ReLU, Residual, Sequential)

# (blocks, bottleneck width, output channels, first stride) per stage
RESNET50_STAGES = ((3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2))
TINY_CHANNELS = 8
TINY_BLOCKS = 2
TINY_POOL = (4, 4)


def build_mlp(n_in, spec, rng):
    return Sequential(Dense(n_in, spec.hidden_units, rng), ReLU(),
                      Dense(spec.hidden_units, 2, rng))


def _head(n_in, spec, rng):
    # dense(alpha4) -> dense(8) -> 2-way softmax logits
    return [Dense(n_in, spec.dense_units, rng), ReLU(), Dense(spec.dense_units, 8, rng), ReLU(),
            Dense(8, 2, rng)]


def build_cnn(input_shape, spec, rng):
    s, d = input_shape
    conv = Conv2D(1, spec.conv_filters, spec.kernel_size, rng)
    _, oh, ow = conv.output_shape((1, s, d))
    if oh < 2 or ow < 2:
        raise ValueError(f"input {input_shape} too small for kernel {spec.kernel_size} + pooling")
    pool = MaxPool2D(2)
    flat = int(np.prod(pool.output_shape((spec.conv_filters, oh, ow))))
    return Sequential(conv, ReLU(), pool, Dropout(spec.dropout), Flatten(), *_head(flat, spec, rng))


def build_lstm(input_shape, spec, rng):
    _, d = input_shape
    return Sequential(LSTM(d, spec.lstm_units, rng), Dropout(spec.dropout),
                      *_head(spec.lstm_units, spec, rng))


def basic_block(c, rng):
    main = Sequential(Conv2D(c, c, 3, rng, pad=1, bias=False), BatchNorm2D(c), ReLU(),
                      Conv2D(c, c, 3, rng, pad=1, bias=False), BatchNorm2D(c))
    return Residual(main, None, name=f"BasicBlock({c})")


def bottleneck(c_in, width, c_out, stride, rng):
    main = Sequential(
        Conv2D(c_in, width, 1, rng, bias=False), BatchNorm2D(width), ReLU(),
        Conv2D(width, width, 3, rng, stride=stride, pad=1, bias=False), BatchNorm2D(width), ReLU(),
        Conv2D(width, c_out, 1, rng, bias=False), BatchNorm2D(c_out))
    shortcut = None
    if stride != 1 or c_in != c_out:
        shortcut = Sequential(Conv2D(c_in, c_out, 1, rng, stride=stride, bias=False),
                              BatchNorm2D(c_out))
    return Residual(main, shortcut, name=f"Bottleneck({c_in}->{width}->{c_out}, stride={stride})")


def build_resnet(input_shape, spec, rng):
    if spec.preset == "tiny":
        c = TINY_CHANNELS
        pool = AdaptiveAvgPool2D(*TINY_POOL)
        return Sequential(
            Conv2D(1, c, 3, rng, stride=2, pad=1, bias=False), BatchNorm2D(c), ReLU(),
            *[basic_block(c, rng) for _ in range(TINY_BLOCKS)],
            pool, Flatten(), Dense(c * TINY_POOL[0] * TINY_POOL[1], 2, rng))
    layers = [Conv2D(1, 64, 7, rng, stride=2, pad=3, bias=False), BatchNorm2D(64), ReLU(),
              MaxPool2D(3, stride=2, pad=1)]
    c_in = 64
    for idx, (blocks, width, c_out, stride) in enumerate(RESNET50_STAGES, start=2):
        stage = [bottleneck(c_in, width, c_out, stride, rng)]
        stage += [bottleneck(c_out, width, c_out, 1, rng) for _ in range(blocks - 1)]
        layers.append(Sequential(*stage, name=f"conv{idx}_x"))
        c_in = c_out
    layers += [AdaptiveAvgPool2D(1, 1), Flatten(), Dense(c_in, 2, rng)]
    return Sequential(*layers)


def resnet50_shape_table(input_shape):
    """Per-example output shapes of each top-level resnet50_audio block, derived from the stage table."""
    def out(n, k, s, p):
        return (n + 2 * p - k) // s + 1

    h, w = input_shape
    rows = []
    h, w = out(h, 7, 2, 3), out(w, 7, 2, 3)
    rows += [(64, h, w)] * 3
    h, w = out(h, 3, 2, 1), out(w, 3, 2, 1)
    rows.append((64, h, w))
    for _, _, c_out, stride in RESNET50_STAGES:
        h, w = out(h, 3, stride, 1), out(w, 3, stride, 1)
        rows.append((c_out, h, w))
    rows += [(2048, 1, 1), (2048,), (2,)]
    return rows


def build_network(spec, input_shape, rng):
    """Network mapping a batch of inputs to 2-way logits."""
    s, d = input_shape
    if spec.family == "MLP":
        return build_mlp(d, spec, rng)
    if spec.family == "CNN":
        return build_cnn(input_shape, spec, rng)
    if spec.family == "LSTM":
        return build_lstm(input_shape, spec, rng)
    if spec.family == "ResNet":
        return build_resnet(input_shape, spec, rng)
    raise ValueError(f"{spec.family} is not a network family")


def network_input(family, x):
    """Reshape a ``(B, S, D)`` batch to what the family's first layer expects."""
    if family in ("CNN", "ResNet"):
        return x[:, None, :, :]
    return x
