"""Compile Turing and stack machines into exactly-specified neural networks.

``wcm`` builds an attention network that simulates a Turing machine one
step per pass; ``ss`` builds recurrent saturated-linear networks over
Cantor-encoded stacks.  ``machine`` holds the reference interpreters.
"""

__version__ = "0.1.0"
