"""Controller synthesis for stochastic systems via uncertain-MDP abstractions and LTLf automata."""
__version__ = "0.1.0"
