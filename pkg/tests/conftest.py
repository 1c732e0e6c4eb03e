import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from rlsprune import network


def small_fc_net(seed=0, sizes=(6, 8, 4, 2)):
    layers = []
    for a, b in zip(sizes[:-2], sizes[1:-1]):
        layers.append(network.fc_layer(a, b, network.RELU))
    layers.append(network.fc_layer(sizes[-2], sizes[-1], network.LINEAR))
    return network.Network(layers, seed=seed, input_shape=(sizes[0],))


def small_conv_net(seed=0, in_shape=(2, 6, 6)):
    c, h, w = in_shape
    layers = [
        network.conv_layer(c, 3, kernel=3),
        network.maxpool_layer(2),
        network.fc_layer(3 * ((h - 2) // 2) * ((w - 2) // 2), 2, network.LINEAR),
    ]
    return network.Network(layers, seed=seed, input_shape=in_shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
