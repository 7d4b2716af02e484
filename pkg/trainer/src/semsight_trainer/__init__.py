"""Neural semantic-foresight trainer and SSP1 inference server.

Consumes SSDS datasets produced by the simulation suite and serves
10-channel probability maps over the SSP1 wire protocol. This package
deliberately has no code dependency on the simulation suite: both
formats are reimplemented here from their frozen byte-level specs.
"""

__version__ = "0.1.0"
