"""Fault injection points for mutation-testing the verification pipeline.

`verify-all` must be able to demonstrate that a deliberately broken formula
fails exactly the checks that guard it.  Production code paths consult this
registry, which is empty unless a test or the CLI arms a fault.
"""

from contextlib import contextmanager

_ACTIVE = set()

KNOWN_FAULTS = {"lelieuvre-sign"}


def is_active(name):
    return name in _ACTIVE


def arm(name):
    if name not in KNOWN_FAULTS:
        raise ValueError(f"unknown fault {name!r}; known: {sorted(KNOWN_FAULTS)}")
    _ACTIVE.add(name)


def disarm(name):
    _ACTIVE.discard(name)


@contextmanager
def injected(name):
    arm(name)
    try:
        yield
    finally:
        disarm(name)
