import random

import pytest
import torch

from ptrorl.synthetic import figure_sentence, random_corpus


@pytest.fixture
def fig():
    return figure_sentence()


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(1234)


@pytest.fixture(scope="session")
def toy_corpus():
    return [figure_sentence()] + random_corpus(7, seed=5, min_tokens=4, max_tokens=12, max_terms=4)
