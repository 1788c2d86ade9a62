"""Mining of kernel bug-fix patch evolution, analytics, repair memory and an advisor-guided repair loop."""

__version__ = "0.1.0"
