"""Robust superhedging and supermartingale optimal transport on a finite price lattice.

Layers, bottom-up:
    lp          dense two-phase simplex with duals and Farkas rays
    marginals   price curves <-> discrete laws, no-arbitrage condition checks
    paths       path lattice with tail proxies, prediction-set masks
    payoffs     payoff catalog, beta functions, G_beta, penalised payoffs
    pricing     primal / superhedging LPs, gap routes, arbitrage certificates
    runner      config-driven pipeline used by the CLI
"""

__version__ = "0.1.0"
