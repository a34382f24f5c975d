"""Policy priors from simulation for Bayesian-optimization policy search."""
