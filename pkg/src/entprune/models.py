"""Named model presets.

mnist2conv is the small two-conv relu classifier; mini-vgg is the desk-scale
six-conv tanh stand-in for a VGG-style stack (16 to 64 filters per layer).
Both take 1x28x28 inputs and end in softmax cross-entropy over 10 classes.
"""

from __future__ import annotations

from .engine import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    SoftmaxCrossEntropy,
    init_network,
)

__all__ = ["PRESETS", "build_preset", "mnist2conv_layers", "mini_vgg_layers"]


def mnist2conv_layers(num_classes: int = 10) -> list:
    return [
        Conv2D(1, 8, 3),
        Activation("relu"),
        MaxPool2D(2),
        Conv2D(8, 16, 3),
        Activation("relu"),
        MaxPool2D(2),
        Flatten(),
        Dense(16 * 5 * 5, num_classes),
        SoftmaxCrossEntropy(),
    ]


def mini_vgg_layers(num_classes: int = 10) -> list:
    return [
        Conv2D(1, 16, 3, padding=1),
        Activation("tanh"),
        Conv2D(16, 16, 3, padding=1),
        Activation("tanh"),
        MaxPool2D(2),
        Conv2D(16, 32, 3, padding=1),
        Activation("tanh"),
        Conv2D(32, 32, 3, padding=1),
        Activation("tanh"),
        MaxPool2D(2),
        Conv2D(32, 64, 3, padding=1),
        Activation("tanh"),
        Conv2D(64, 64, 3, padding=1),
        Activation("tanh"),
        MaxPool2D(2),
        Flatten(),
        Dense(64 * 3 * 3, num_classes),
        SoftmaxCrossEntropy(),
    ]


PRESETS = {
    "mnist2conv": mnist2conv_layers,
    "mini-vgg": mini_vgg_layers,
}


def build_preset(name: str, seed: int, num_classes: int = 10) -> Network:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return init_network(PRESETS[name](num_classes), (1, 28, 28), seed)
