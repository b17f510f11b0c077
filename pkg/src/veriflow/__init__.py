"""veriflow: requirements-to-release testing pipeline with governed automation.

The package turns plain-text requirements into executable test suites,
selects a suite under budget with Monte Carlo Tree Search, classifies
execution outcomes with a rule/model ensemble, and gates every automated
decision through declarative policies, a trust-escalation state machine,
a hash-chained audit log, and fairness checks. A seeded simulator drives
the whole pipeline end to end and feeds a DORA-style metrics engine.
"""

__version__ = "0.1.0"
