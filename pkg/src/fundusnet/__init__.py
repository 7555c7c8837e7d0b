"""Retinal fundus screening: a small CNN built from first principles.

Library layers: ``ops`` (tensor kernels), ``network`` (the model),
``data`` (ingestion/split/augmentation), ``training``, ``evaluation``,
``weights_io`` (persistence), ``service`` (HTTP), ``reporting`` (figures
and delimited outputs), and ``cli`` (the command-line front door).
"""

__version__ = "0.1.0"
