"""xld: a desk-scale laboratory for studying how tiny multilingual
language models learn to copy and to translate.

Subsystems: model/train/checkpoint (the trainer), tokenizer/corpus (the
synthetic data), wlt (the word-translation benchmark), evalkit
(behavioral metrics), lens (layer-wise readout), influence (update
attribution), surgery (checkpoint interventions), stats (corpus
statistics and variance decomposition), cli (the ``xld`` command).
"""

import os

# Threading defaults, set before numpy/numba first load anything:
#  - the OMP threading layer (this image's TBB is too old),
#  - idle OMP workers sleep instead of spinning (spinning starves the
#    BLAS pool between short kernel calls; ~1.6x end-to-end),
#  - BLAS workers give up their own spin quickly for the same reason.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
os.environ.setdefault("OMP_WAIT_POLICY", "PASSIVE")
os.environ.setdefault("OPENBLAS_THREAD_TIMEOUT", "1")
os.environ.setdefault("THREAD_TIMEOUT", "1")

__version__ = "0.1.0"
