"""dimerlab: noisy two-qubit simulation of dissipative energy transfer.

Subpackages: exact dimer mechanics (qdyn), the noisy circuit simulator
(circuit), the HEOM reference solver (heom), trace post-processing
(postproc), HEOM calibration (calib), transfer-tensor extension (ttm),
and the command-line driver (cli).
"""

__version__ = "0.1.0"
