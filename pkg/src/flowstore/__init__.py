"""Label-directed encrypted storage for an information-flow-control runtime.

Layout:

* :mod:`flowstore.labels` -- three-component security labels and their lattice
* :mod:`flowstore.terms` -- the term language, parser and typechecker
* :mod:`flowstore.runtime` -- the floating-label monitor (store-agnostic)
* :mod:`flowstore.ideal` -- plaintext reference store, the correctness oracle
* :mod:`flowstore.providers` -- cryptographic primitive backends
* :mod:`flowstore.cryptostore` -- keystores, category keys, serialization,
  replay protection and adversary strategies
* :mod:`flowstore.backends` -- in-memory and file persistence
* :mod:`flowstore.harness` -- security games and the ideal/real oracle
* :mod:`flowstore.cli` -- command-line front end
"""

from .labels import (
    BOTTOM,
    PUBLIC,
    TOP,
    Category,
    Formula,
    Label,
    Principal,
    can_flow_to,
    component_flow,
    entails,
    format_label,
    join,
    meet,
    parse_label,
)
from .runtime import Configuration, MonitorFailure, run, step
from .terms import parse_term, pretty, typecheck

__all__ = [
    "BOTTOM",
    "PUBLIC",
    "TOP",
    "Category",
    "Configuration",
    "Formula",
    "Label",
    "MonitorFailure",
    "Principal",
    "can_flow_to",
    "component_flow",
    "entails",
    "format_label",
    "join",
    "meet",
    "parse_label",
    "parse_term",
    "pretty",
    "run",
    "step",
    "typecheck",
]
