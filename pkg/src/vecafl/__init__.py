"""Vehicular asynchronous federated learning simulator.

Self-contained numpy simulation of a roadside unit that aggregates local
models uploaded by passing vehicles over a fading uplink.  Vehicle selection
is learned with an actor-critic policy, and uploads can be screened by a
loss-threshold filter against a trusted model kept at the roadside unit.
"""

__version__ = "0.1.0"
