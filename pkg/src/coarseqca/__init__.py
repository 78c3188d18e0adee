"""coarseqca: windowed evaluation of nets of matrix algebras on coarse spaces.

Locality certificates, circuit layering and index invariants for automorphism
families over integer lattices and finite labelled site sets.
"""

__version__ = "0.1.0"
