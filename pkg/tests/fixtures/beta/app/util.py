import functools
from typing import TYPE_CHECKING

from . import models
from .models import Animal as BaseAnimal

LIMIT: int = 10
FIRST = SECOND = "x"

if TYPE_CHECKING:
    class Checker:
        pass


@functools.cache
def cached(n):
    def inner(k):
        return k + LIMIT

    return inner(n)


def make_dog():
    return models.Dog()


class Wrapper(BaseAnimal):
    def speak(self):
        return "wrapped"


if __name__ == "__main__":
    SKIPPED = cached(1)
