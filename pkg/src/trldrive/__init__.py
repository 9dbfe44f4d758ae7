"""Deep Q-learning and transfer learning for driving decisions at an unsignalized intersection.

Modules: ``vehicle`` (bicycle kinematics, lateral control, IDM), ``road``
(layout and routes), ``collision``, ``world`` (compiled fleet update),
``env`` (the MDP), ``neural`` (MLP with plain or dueling head), ``agent``
(DQN learner), ``transfer`` (expert-guided action selection), ``harness``
(training, evaluation, reports) and ``cli``.
"""

__version__ = "0.1.0"
