import pytest

from paralow.core import Vocabulary
from paralow.toy import TableLM

ABC = ("a", "b", "c", "eos")


def abc_vocab() -> Vocabulary:
    return Vocabulary(tokens=ABC, eos_id=3)


def uniform_lm(size: int) -> TableLM:
    letters = "abcdefghijklmnopqrstuvwxyz"
    vocab = Vocabulary(tokens=tuple(letters[: size - 1]) + ("eos",), eos_id=size - 1)
    return TableLM(vocab, 0, {}, [1.0 / size] * size)


@pytest.fixture
def hand_para() -> TableLM:
    # Unconditional paraphrase-side table: a is always the greedy pick.
    return TableLM(abc_vocab(), 0, {}, [0.5, 0.3, 0.15, 0.05])


@pytest.fixture
def hand_tar() -> TableLM:
    # Target-side table preferring b.
    return TableLM(abc_vocab(), 0, {}, [0.1, 0.6, 0.2, 0.1])
