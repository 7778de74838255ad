"""Fault-injection switches for the verification harness.

``cmd verify --mutate NAME`` flips one of these to prove a suite actually
catches the defect it claims to guard against.  Production code paths consult
the registry; everything is off by default and never toggled outside tests or
the CLI mutation mode.
"""

from __future__ import annotations

from contextlib import contextmanager

from .errors import ConfigError

MUTATIONS = {
    "content_lambda_sign_flip": False,
}


def active(name: str) -> bool:
    return MUTATIONS.get(name, False)


@contextmanager
def mutate(name: str):
    if name not in MUTATIONS:
        raise ConfigError(
            f"unknown mutation {name!r}; known: {sorted(MUTATIONS)}"
        )
    MUTATIONS[name] = True
    try:
        yield
    finally:
        MUTATIONS[name] = False
