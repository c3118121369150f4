"""Two-loop dialogue tutoring engine.

An outer loop schedules videos and exercises from a per-student curriculum;
an inner loop runs each exercise as a finite-state dialogue whose pedagogical
interventions are picked by an online contextual-bandit policy. A simulator
and experiment harness rerun the A/B evaluation protocol at desk scale, and
an HTTP service exposes live tutoring sessions.
"""

__version__ = "0.1.0"
