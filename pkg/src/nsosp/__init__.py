"""Online structured prediction with surrogate-gap decoders and OGD.

Submodules
----------
loss_decomp  target losses in bilinear form and their problem constants
polytopes    linear minimisation oracles, Frank-Wolfe, projections
surrogate    surrogate losses (smooth hinge, logistic, SparseMAP, conv-FY)
decode       randomized decoders and surrogate-gap certificates
ogd          online gradient descent and learning-rate policies
envs         synthetic environments and comparator sequences
harness      experiment runner and bound verification
cli          command-line entry point
"""

__version__ = "0.1.0"
