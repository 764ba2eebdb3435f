"""Controllability workbench for parabolic systems with a Jordan-block diffusion matrix.

Modules: ``model`` (spectrum), ``criteria`` (verdicts), ``moments``
(biorthogonal families), ``synth`` (moment-method controls), ``sim``
(modal solvers), ``construct`` (explicit counterexample), ``opcalc``
(differential-operator identities) and ``cli``.
"""

__version__ = "0.1.0"
