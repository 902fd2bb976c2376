"""Stackelberg POMDP simulator and leader-learning toolkit."""
