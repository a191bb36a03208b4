"""tutorlab: goal-oriented tutoring policies over prerequisite concept graphs.

A separable pipeline: cognitive graph -> translation-pretrained node
embeddings -> diagnosis-based student simulator -> graph-encoded dueling
Q-learning agent, plus heuristic baselines and an evaluation harness.
"""

__version__ = "0.1.0"
