__all__ = ["Animal", "Dog"]


class Animal:
    kind = "generic"

    def speak(self):
        return "..."


class Dog(Animal):
    def speak(self):
        return "woof"


class _Hidden:
    pass
